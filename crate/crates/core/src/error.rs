//! Error types shared across the crate.

use thiserror::Error;

/// Top-level error for all analytic and stochastic operations.
#[derive(Debug, Clone, Error)]
pub enum CoreError {
    /// Adaptive quadrature failed to reach the requested tolerance.
    #[error("quadrature did not converge: requested rel. tolerance {requested:e}, achieved {achieved:e}")]
    QuadratureNonConvergence { requested: f64, achieved: f64 },

    /// Kernel is identically zero (or invalid) where a positive rate is required.
    #[error("collision kernel is identically zero; cannot sample scattering directions")]
    ZeroKernel,

    /// Kernel violates a construction invariant (negativity, non-finite values).
    #[error("invalid angular kernel: {0}")]
    InvalidKernel(String),

    /// `det(I + tA)` vanishes at a finite positive time.
    #[error("flow blows up at t = {critical_time}; L(t) is not globally defined")]
    BlowUp { critical_time: f64 },

    /// The deformation matrix is zero.
    #[error("degenerate flow: deformation matrix A = 0")]
    DegenerateFlow,

    /// A flow family does not support the requested rescaled dynamics.
    #[error("flow family {0} has no constant-generator rescaled form")]
    NoRescaledForm(String),

    /// The leading eigenvalue of the moment operator has a non-negligible
    /// imaginary part, which signals `||L||/b` outside the perturbative regime.
    #[error("leading eigenvalue is not real: {re} + {im}i (|Im| tolerance {tol:e})")]
    NonRealLeadingEigenvalue { re: f64, im: f64, tol: f64 },

    /// Eigen-solver failed to converge.
    #[error("eigenvalue computation failed: {0}")]
    EigenFailure(String),

    /// ODE integration failed (step-size underflow).
    #[error("moment ODE integration failed: step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    /// Invalid simulation configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Majorant collapse or other runtime simulation failure.
    #[error("simulation error: {0}")]
    Simulation(String),

    /// A run did not reach a steady state within the allotted horizon.
    #[error(
        "not converged by t = {t_max}: trailing trend {slope:e} +- {slope_se:e} per unit time"
    )]
    NotConverged {
        t_max: f64,
        slope: f64,
        slope_se: f64,
    },

    /// Sample set unfit for estimation (too small, degenerate covariance, ...).
    #[error("degenerate sample set: {0}")]
    DegenerateSamples(String),

    /// Requested matrix is not positive definite.
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
