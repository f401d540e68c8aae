use std::io;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgeError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: malformed triple record: {reason}")]
    MalformedTriple {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("{path}:{line}: malformed type record: {reason}")]
    MalformedTypeRecord {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("unknown symbol {symbol:?} (dictionary is frozen)")]
    UnknownSymbol { symbol: String },

    #[error("checkpoint {path}: {reason}")]
    BadCheckpoint { path: String, reason: String },

    #[error("non-finite gradient on {row}; update rejected")]
    NonFiniteGradient { row: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {what}")]
    EmptyInput { what: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl KgeError {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        KgeError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, KgeError>;
