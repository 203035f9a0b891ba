//! Error types.

use alloc::boxed::Box;
use alloc::string::String;
use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Everything that can go wrong in the pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Density integrates to zero, is negative somewhere, or cannot be inverted.
    #[error("degenerate density: {0}")]
    DegenerateDensity(String),
    /// Bad user-facing parameter.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        /// Parameter name.
        name: &'static str,
        /// Human readable reason.
        reason: String,
    },
    /// Caller broke a documented precondition.
    #[error("contract violation: {0}")]
    ContractViolation(String),
    /// Quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge (estimate {estimate:e}, error {error:e})")]
    QuadratureFailure {
        /// Best estimate.
        estimate: f64,
        /// Error estimate.
        error: f64,
    },
    /// The set `S` is empty for this mesh.
    #[error("feasible set is empty: {0}")]
    Infeasible(String),
    /// The projection did not reach its tolerance.
    #[error("projection did not converge after {iterations} Newton steps (residual {residual:e})")]
    ProjectionNotConverged {
        /// Newton iterations used.
        iterations: usize,
        /// Final primal residual `||B(W) - b||`.
        residual: f64,
    },
    /// A non-finite value appeared during the iteration.
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    /// Failure inside the update of one plan block (0-based).
    #[error("block {block}: {source}")]
    InBlock {
        /// Block index.
        block: usize,
        /// Underlying error.
        source: Box<Error>,
    },
    /// Every multistart run failed.
    #[error("all {0} multistart runs failed; first error: {1}")]
    AllStartsFailed(usize, String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
