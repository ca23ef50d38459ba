//! Error type shared by every module of the simulator.

use thiserror::Error;

/// Errors raised by the solver, model builders, and integrators.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A constructor or operation received inputs violating a documented
    /// invariant (non-positive capacitance, mismatched dimensions, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The flux grid is too narrow: a requested eigenfunction has not decayed
    /// below the edge tolerance at one of the grid boundaries.
    #[error(
        "flux grid too narrow: level {level} has relative edge amplitude {edge_amplitude:.3e} \
         (tolerance {tolerance:.3e})"
    )]
    GridTooNarrow {
        level: usize,
        edge_amplitude: f64,
        tolerance: f64,
    },

    /// Doubling the flux grid moved a requested eigenvalue by more than the
    /// convergence tolerance.
    #[error(
        "eigensolver not converged: level {level} changed by {delta:.3e} (relative) under grid \
         doubling, tolerance {tolerance:.3e}"
    )]
    NotConverged {
        level: usize,
        delta: f64,
        tolerance: f64,
    },

    /// The dark state is undefined where the drive envelope vanishes.
    #[error("drive envelope is zero at t = {t}; the dark state is undefined there")]
    DriveZero { t: f64 },

    /// The integrator step violates a resolution guard.
    #[error("step resolution violated: {0}")]
    StepResolution(String),

    /// The conditioned norm grew beyond the per-step tolerance, signalling an
    /// unstable integration.
    #[error(
        "norm growth at t = {t}: norm^2 increased by {delta:.3e} (tolerance {tolerance:.3e} \
         per step)"
    )]
    NormGrowth { t: f64, delta: f64, tolerance: f64 },

    /// The conditioned state has numerically zero norm; conditioned
    /// quantities are undefined.
    #[error("state norm^2 = {norm_sqr:.3e} is below 1e-15; conditioned metrics are undefined")]
    ZeroNorm { norm_sqr: f64 },

    /// Photon preparation requires every qubit except the first to be
    /// decoupled.
    #[error("decoupling violation: {0}")]
    DecouplingViolation(String),

    /// The full-space simulation would exceed the guarded dimension.
    #[error("dimension guard: full space dimension {dim} exceeds the limit {limit}")]
    DimensionGuard { dim: usize, limit: usize },

    /// Two trajectory records do not share the same sample times.
    #[error("sample mismatch: {0}")]
    SampleMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
