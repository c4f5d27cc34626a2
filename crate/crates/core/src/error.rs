use thiserror::Error;

/// Errors raised by the clustering library.
#[derive(Debug, Error)]
pub enum FdError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("index {index} out of range (rank {rank})")]
    Index { index: usize, rank: usize },

    #[error("insufficient sample: need at least {needed} curves, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("numerical input error: {0}")]
    Numerical(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("ingestion error at row {row}: {message}")]
    Ingestion { row: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl FdError {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        FdError::Dimension(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        FdError::Argument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, FdError>;
