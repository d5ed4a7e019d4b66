//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by indexing, model training and the answering pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A data file could not be parsed. `line` is 1-based when known.
    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Inconsistent configuration (dimension mismatches, bad hyperparameters).
    #[error("configuration error: {0}")]
    Config(String),

    /// Corpus-level problems (e.g. every document empty).
    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("unknown doc_id {doc_id} (index holds {doc_count} documents)")]
    DocNotFound { doc_id: u32, doc_count: u32 },

    /// A persisted artifact is missing, truncated or has a bad header.
    #[error("persistence error in {path}: {message}")]
    Persist { path: PathBuf, message: String },

    /// Exam scoring was asked about questions that have no prediction.
    #[error("missing predictions for question ids: {}", ids.join(", "))]
    MissingPredictions { ids: Vec<String> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn persist(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Persist {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by malformed input data rather than by how the
    /// run was configured. CLI exit codes key off this split.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Config(_))
    }
}
