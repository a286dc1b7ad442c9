//! Pseudo-spectral Galerkin solver for the stochastic 3D Navier-Stokes
//! equations with Brinkman-Forchheimer damping `a |u|^{2 alpha} u` on a
//! periodic box, plus the Monte Carlo machinery used to measure the strong
//! `L^2` convergence rate of the fully implicit time Euler scheme.
//!
//! The numerical core is generic over the floating point scalar (see
//! [`scalar::Scalar`]); `f64` aliases are exported at the crate root and are
//! what the CLI and the experiment presets use.

pub mod audit;
pub mod field;
pub mod grid;
pub mod noise;
pub mod nonlinear;
pub mod scheme;
pub mod oracle;
pub mod scalar;

mod rng;
mod transform;

#[cfg(test)]
pub(crate) mod testutil;

pub use audit::{
    audit_fractional_bf, audit_fractional_bilinear, audit_gagliardo_nirenberg, audit_pointwise,
    AuditReport,
};
pub use field::{NormReport, OperatorError, PhysicalField, RawSpectral, SpectralField};
pub use grid::{GridError, TorusGrid};
pub use noise::{
    audit_condition_g, refine, sample_path, DiffusionKind, DiffusionOp, ModeId, NoiseError,
    NoisePath, Parity, QSpec,
};
pub use nonlinear::{bf_monotonicity_gap, bf_term, bilinear_b, trilinear_b, BfParams};
pub use scheme::{
    galerkin_project, implicit_step, run_trajectory, step_residual, MomentStats, RecordPolicy,
    SchemeError, SchemeParams, SolverDiverged, SolverMethod, SolverParams, StepLedger, Trajectory,
};
pub use scalar::Scalar;

/// Production-precision aliases.
pub type TorusGrid64 = grid::TorusGrid<f64>;
pub type SpectralField64 = field::SpectralField<f64>;
pub type PhysicalField64 = field::PhysicalField<f64>;

/// Single-precision aliases for cheap exploratory runs.
pub type TorusGrid32 = grid::TorusGrid<f32>;
pub type SpectralField32 = field::SpectralField<f32>;
pub type PhysicalField32 = field::PhysicalField<f32>;
