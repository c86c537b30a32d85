use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("token id {id} at position {position} is outside the vocabulary of size {vocab_size}")]
    TokenOutOfRange {
        position: usize,
        id: usize,
        vocab_size: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<(usize, usize)>,
        got: Vec<(usize, usize)>,
    },

    #[error("trigger slot {slot} is not present in input {input}")]
    NotATriggerSlot { input: usize, slot: usize },

    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("`{0}` has no static vector")]
    OutOfVocabulary(String),

    #[error("duplicate pair {0}:{1}")]
    DuplicatePair(String, String),

    #[error("unsupported checkpoint: {0}")]
    Checkpoint(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
