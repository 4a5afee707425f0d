use std::path::PathBuf;

/// Errors produced by every stage of the lab.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: invalid field `{field}`: {reason}")]
    Parse { line: usize, field: String, reason: String },

    #[error("line {line}: unknown {kind} token `{token}`")]
    UnknownToken {
        line: usize,
        kind: &'static str,
        token: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("integrity violation: {0}")]
    Integrity(String),

    #[error("input not sorted: {0}")]
    Unsorted(String),

    #[error("insufficient log horizon: {0}")]
    InsufficientHorizon(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(line: usize, field: &str, reason: impl Into<String>) -> Self {
        Error::Parse {
            line,
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
