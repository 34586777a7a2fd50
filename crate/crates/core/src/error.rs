use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty window")]
    EmptyWindow,

    #[error("non-finite input")]
    NonFiniteInput,

    #[error("invalid value for `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("internal state error: {0}")]
    State(String),

    #[error("warm-up set is empty")]
    EmptyWarmSet,

    #[error("series of length {len} is too short; need at least {min} points")]
    SeriesTooShort { len: usize, min: usize },

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("column `{column}` not found; available columns: {}", .available.join(", "))]
    ColumnNotFound {
        column: String,
        available: Vec<String>,
    },

    #[error("cannot parse `{value}` as a number at row {row}")]
    Parse { row: u64, value: String },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("I/O error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Broad class of an error, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Runtime,
    Io,
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config { .. }
            | Error::ColumnNotFound { .. }
            | Error::Parse { .. }
            | Error::Malformed(_)
            | Error::Mismatch(_)
            | Error::SeriesTooShort { .. }
            | Error::EmptyWarmSet => ErrorClass::Validation,
            Error::FileNotFound(_) | Error::Io { .. } => ErrorClass::Io,
            Error::EmptyWindow
            | Error::NonFiniteInput
            | Error::Shape { .. }
            | Error::Numeric(_)
            | Error::State(_) => ErrorClass::Runtime,
        }
    }
}
