use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to write {path}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}: no valid records")]
    NoRecords(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown continent code {0:?}")]
    UnknownContinent(String),
    #[error("item {0} listed twice with conflicting continents")]
    ConflictingContinents(String),
    #[error("item {0} is not in the catalog")]
    UnknownItem(String),
    #[error("empty result: {0}")]
    Empty(String),
    #[error("popularity group {0} is empty")]
    EmptyGroup(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("list for user {user} has {len} entries, fewer than k = {k}")]
    ListTooShort { user: String, len: usize, k: usize },
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("instance too large for exhaustive search: n = {n}, k = {k}")]
    InstanceTooLarge { n: usize, k: usize },
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("{stage} stage failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }

    /// Wraps an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
