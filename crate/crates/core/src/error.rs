use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate visit id {visit_id} for user {user_id}")]
    DuplicateVisit { user_id: String, visit_id: i64 },

    #[error("unknown productivity level {0:?}")]
    UnknownLevel(String),

    #[error("no history visit at or before second {0}")]
    NoPrecedingVisit(i64),

    #[error("no history for user {0}")]
    MissingHistory(String),

    #[error("no ground truth for user {0}")]
    MissingGroundTruth(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("row width {got} does not match expected width {expected}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("profile: {0}")]
    Profile(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
