use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: expected {expected} nodes, got {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("coefficient violates ellipticity bounds at node {node}: {reason}")]
    Coefficient { node: usize, reason: String },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    LinearNonConvergence { iterations: usize, residual: f64 },

    #[error("nonlinear solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonlinearNonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("fixed-point iteration failed at n = {n} after {iterations} iterations: {reason}")]
    FixedPointNonConvergence {
        n: u32,
        iterations: usize,
        reason: String,
        increments: Vec<f64>,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for the failures a driver should report as non-convergence.
    pub fn is_non_convergence(&self) -> bool {
        matches!(
            self,
            Error::LinearNonConvergence { .. }
                | Error::NonlinearNonConvergence { .. }
                | Error::FixedPointNonConvergence { .. }
        )
    }
}
