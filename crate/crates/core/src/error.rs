//! Error type shared by all solver modules.

use thiserror::Error;

/// Everything that can go wrong while setting up or running a solve.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("net boundary flux mismatch: {0}")]
    IncompatibleFluxes(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("input not admissible: {0}")]
    NotAdmissible(String),

    #[error("linear solve failed: {0}")]
    SingularSystem(String),

    #[error("iteration failed to converge: {0}")]
    NoConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
