use std::path::PathBuf;

use thiserror::Error;

/// Errors are grouped by what went wrong so the CLI can map them onto exit
/// codes (usage/config, data, numeric).
#[derive(Debug, Error)]
pub enum NileError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl NileError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            NileError::Config(_) => ErrorKind::Usage,
            NileError::Numeric(_) => ErrorKind::Numeric,
            NileError::Data(_)
            | NileError::Parse { .. }
            | NileError::MissingFile(_)
            | NileError::Io { .. } => ErrorKind::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            NileError::MissingFile(path)
        } else {
            NileError::Io { path, source }
        }
    }
}

pub type Result<T> = std::result::Result<T, NileError>;
