use std::path::PathBuf;

use thiserror::Error;

/// Failure modes of the checkpoint reader.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointErrorKind {
    CorruptHeader,
    Truncated,
    VersionMismatch,
    Mismatch,
}

#[derive(Debug, Error)]
pub enum SamgcError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("empty reduction: {0}")]
    EmptyReduction(String),

    #[error("checkpoint error ({kind:?}): {message}")]
    Checkpoint {
        kind: CheckpointErrorKind,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SamgcError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        SamgcError::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SamgcError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn checkpoint(kind: CheckpointErrorKind, msg: impl Into<String>) -> Self {
        SamgcError::Checkpoint {
            kind,
            message: msg.into(),
        }
    }

    /// Short machine-readable tag for the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            SamgcError::Shape(_) => "shape",
            SamgcError::Data(_) => "data",
            SamgcError::Config(_) => "config",
            SamgcError::Contract(_) => "contract",
            SamgcError::EmptyReduction(_) => "empty_reduction",
            SamgcError::Checkpoint { .. } => "checkpoint",
            SamgcError::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, SamgcError>;
