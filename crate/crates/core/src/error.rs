use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::client::ClientError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown chunk `{0}`")]
    UnknownChunk(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("query id mismatch: `{left}` vs `{right}`")]
    QueryMismatch { left: String, right: String },

    #[error("embedder mismatch: index built with `{index}`, query embedded with `{query}`")]
    BackendMismatch { index: String, query: String },

    #[error("unknown template `{0}`")]
    UnknownTemplate(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),

    #[error("missing component: {0}")]
    MissingComponent(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("corrupt index file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },

    #[error(transparent)]
    Client(#[from] ClientError),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
