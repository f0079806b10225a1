use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in `{segment}`: expected {expected}, got {actual}")]
    Dimension {
        segment: String,
        expected: usize,
        actual: usize,
    },

    #[error("parameter layout mismatch: {0}")]
    Layout(String),

    #[error("tape does not match the parameters it is replayed against: {0}")]
    StaleTape(String),

    #[error("label must be 0 or 1, got {0}")]
    InvalidLabel(u8),

    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dangling references in {what}: {ids:?}")]
    DanglingIds { what: String, ids: Vec<String> },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("insufficient clean data: need {required}, have {available}")]
    InsufficientClean { required: usize, available: usize },

    #[error("leak guard: weak set `{source_name}` contains {count} test-split news ids (first: {first})")]
    LeakGuard {
        source_name: String,
        count: usize,
        first: String,
    },

    #[error("schema mismatch for {path}: found `{found}`, expected `{expected}`")]
    Schema {
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
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

    /// Process exit code for the command-line driver: 2 validation, 3 numeric
    /// failure, 4 leak guard, 1 for environment failures (I/O).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) => 3,
            Error::LeakGuard { .. } => 4,
            Error::Io { .. } => 1,
            _ => 2,
        }
    }
}
