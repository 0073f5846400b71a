//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violated a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// A problem tied to a specific observation row (0-based index).
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    /// An iterative fit failed to converge within its budget.
    #[error("fit did not converge: {0}")]
    NoConvergence(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn row(row: usize, msg: impl Into<String>) -> Self {
        Error::Row { row, message: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
