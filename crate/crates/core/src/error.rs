use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: unknown category `{value}`")]
    UnknownCategory {
        path: PathBuf,
        line: usize,
        value: String,
    },

    #[error("{path}:{line}: unparseable timestamp `{value}`")]
    BadTimestamp {
        path: PathBuf,
        line: usize,
        value: String,
    },

    #[error("invalid trade bar at {minute}: {message}")]
    InvalidBar { minute: String, message: String },

    #[error("duplicate trade minute {0}")]
    DuplicateMinute(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("scaler has not been fitted")]
    UnfittedScaler,

    #[error("vocabulary is empty")]
    EmptyVocab,

    #[error("training aborted: NaN loss in epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
