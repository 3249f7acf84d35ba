//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by parsing, validation, and analysis.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data, reported with a 1-based line number.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A precondition or table invariant does not hold.
    #[error("{0}")]
    Validation(String),

    /// A statistic requires more defined observations than are available.
    #[error("insufficient observations: {0}")]
    InsufficientObservations(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
