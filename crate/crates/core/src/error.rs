use thiserror::Error;

/// Errors produced by the reconstruction library.
#[derive(Debug, Error)]
pub enum MolError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("non-finite iterate at iteration {iteration}")]
    Numeric { iteration: usize },

    #[error("backward iteration did not converge after {iterations} iterations (residual {residual:e})")]
    BackwardNonConvergence { iterations: usize, residual: f64 },

    #[error("all {batches} batches diverged in epoch {epoch}")]
    AllBatchesDiverged { epoch: usize, batches: usize },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MolError>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(MolError::Dimension(msg.into()))
}

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(MolError::Parameter(msg.into()))
}
