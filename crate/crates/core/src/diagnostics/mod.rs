//! Solution-quality diagnostics: energy-norm tables, pressure
//! reconstruction, boundary-condition residuals, and a coercivity-constant
//! probe.
//!
//! Everything here consumes finished trajectories; nothing feeds back into
//! the solvers.

pub mod boundary;
pub mod energy;
pub mod korn;
pub mod pressure;
