use thiserror::Error;

/// Errors raised by the kernel, Lyapunov and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("series budget exceeded after {terms} terms (tail bound {tail_bound:e})")]
    BudgetExceeded { terms: usize, tail_bound: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("root search did not converge: {0}")]
    NoConvergence(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("resource limit: {cells} cells exceeds the budget of {limit}")]
    ResourceLimit { cells: u128, limit: u128 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("out of scope: {0}")]
    Scope(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
