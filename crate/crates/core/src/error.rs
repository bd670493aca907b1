use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the chillmpc core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid COP {0}: must be strictly positive")]
    InvalidCop(f64),

    #[error("too few records: need at least {needed}, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("rank-deficient regressors (condition number {condition:.3e}); unexcited or collinear columns: {}", columns.join(", "))]
    RankDeficient {
        condition: f64,
        columns: Vec<String>,
    },

    #[error("empty record set")]
    EmptyRecords,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("coverage gap: {0}")]
    Coverage(String),

    #[error("empty log")]
    EmptyLog,

    #[error("empty beta table")]
    EmptyBetaTable,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
