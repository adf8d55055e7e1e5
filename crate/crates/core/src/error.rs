//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset construction, training, attacks, and scoring.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: u64, message: String },

    #[error("csv schema error at line {line}: {message}")]
    CsvSchema { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("training failed: {0}")]
    Training(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("discriminant error: {0}")]
    Discriminant(String),

    #[error("loss value {value} outside [0, 1]")]
    LossBound { value: f64 },

    #[error("invalid probability mass function: {0}")]
    InvalidPmf(String),

    #[error("model blob error: {0}")]
    ModelBlob(String),

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Annotates an error with the LTU round it occurred in.
    pub fn in_round(self, round: usize) -> Self {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
