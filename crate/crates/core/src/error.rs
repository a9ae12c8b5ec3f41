use thiserror::Error;

/// Errors raised by the landscape toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite energy or gradient at point {point:?}")]
    NonFinite { point: Vec<f64> },

    #[error("eigensolver failed to converge at point {point:?}")]
    Eigensolver { point: Vec<f64> },

    #[error("stationary point has index {index}, expected {expected} (energy {energy})")]
    WrongIndex { index: usize, expected: usize, energy: f64 },

    #[error("no convergence: {0}")]
    NotConverged(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("inconsistent input: {0}")]
    Inconsistent(String),

    #[error("schema mismatch: expected {expected}, found {found}")]
    Schema { expected: String, found: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
