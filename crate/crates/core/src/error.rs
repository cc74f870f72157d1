use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("model fit failed: {0}")]
    Fit(#[from] FitError),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Failure modes of model fitting, carrying enough context to diagnose the fit.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum FitError {
    #[error("kernel matrix not positive definite after jitter {max_jitter:e} (n = {n})")]
    NotPositiveDefinite { n: usize, max_jitter: f64 },

    #[error("all {restarts} optimizer restarts failed; last: {last}")]
    AllRestartsFailed { restarts: usize, last: String },

    #[error("Newton iterations did not converge after {iterations} steps (gradient max-norm {grad_norm:e})")]
    NewtonNotConverged { iterations: usize, grad_norm: f64 },

    #[error("negative log-posterior Hessian is not positive definite at the mode")]
    IndefiniteHessian,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
