use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("missing field {field} at line {line}")]
    MissingField { field: String, line: usize },
    #[error("empty corpus after filtering")]
    EmptyCorpus,
    #[error("empty bag of words")]
    EmptyBagOfWords,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("format version mismatch in {what}: expected {expected}, found {found}")]
    VersionMismatch {
        what: String,
        expected: u32,
        found: u32,
    },
    #[error("corrupt file {0}")]
    Corrupt(String),
    #[error("non-finite {term} loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        term: &'static str,
        epoch: usize,
        batch: usize,
    },
    #[error("word {0:?} has zero document frequency")]
    ZeroDocumentFrequency(String),
    #[error("unknown id {0:?}")]
    UnknownId(String),
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
