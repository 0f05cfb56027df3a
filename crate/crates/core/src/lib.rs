//! Space-time variational solver for unsteady flows of non-Newtonian fluids
//! in planar channels with inflow, wall-slip, and open outflow boundaries.
//!
//! Instead of marching in time, the solver minimizes a single convex
//! functional over whole discrete velocity trajectories.  The functional
//! weights inertia, forcing, and dissipation with an exponentially decaying
//! weight controlled by a relaxation parameter `eps`; driving `eps -> 0`
//! along a continuation ladder recovers the initial-value evolution while
//! the outflow conditions on the open boundary emerge from the minimization
//! itself rather than being imposed.
//!
//! The crate is organized bottom-up:
//!
//! * [`constitutive`] — the shear-dependent stress law, its potentials, and
//!   parameter validation;
//! * [`geometry`] — channel meshes, boundary tagging, fluxes, and the
//!   divergence-free extension of the boundary data;
//! * [`operators`] — trajectories, quadrature, and discrete differential
//!   operators;
//! * [`functional`] — the weighted space-time objective, its gradient, and
//!   the admissible-set projection;
//! * [`minimize`] — a metric-aware L-BFGS and the `eps` continuation driver;
//! * [`reference`] — an implicit time-stepping solver used for cross-checks;
//! * [`diagnostics`] — pressure reconstruction, boundary-condition residuals,
//!   energy ledgers, and a coercivity-ratio probe.

pub mod constitutive;
pub mod diagnostics;
pub mod error;
pub mod functional;
pub mod gauss;
pub mod geometry;
pub mod minimize;
pub mod reference;
pub mod operators;
pub mod verification;

pub use constitutive::{ConstitutiveParams, SymTensor2, ValidationReport};
pub use diagnostics::boundary::{
    boundary_report, default_bumps, default_eta_profiles, BoundaryReport, TimeBump,
};
pub use diagnostics::energy::{energy_report, EnergyReport};
pub use diagnostics::korn::{estimate_korn_constant, korn_ratio, KornEstimate};
pub use diagnostics::pressure::{reconstruct_pressure, PressureField};
pub use verification::ManufacturedFlow;
pub use error::{Error, Result};
pub use functional::{
    ConstraintHandler, ConvectionForm, EnergyBreakdown, FunctionalEval, WideSystem,
};
pub use minimize::{
    epsilon_continuation, lbfgs, minimize, ContinuationReport, MinimizeOpts, MinimizerResult,
    RungReport, RungSuccess, Status,
};
pub use operators::{trajectory_l2_distance, trajectory_l2_norm};
pub use reference::{EnergyLedger, ReferenceSolver, TimeStepperState};
pub use geometry::{
    boundary_flux, build_extension_field, build_rect_channel, BoundaryTag, ChannelMesh,
    ExtensionField, InletProfile, Profile, TagLayout,
};
pub use operators::Trajectory;
