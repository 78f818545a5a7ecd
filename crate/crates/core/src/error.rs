use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed binary or text input. `offset` is the byte position where decoding stopped.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range (size {size})")]
    Index { index: usize, size: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid config: {0}")]
    Config(String),

    /// Dataset JSON schema violation; `path` is a JSON path such as `images[3].split`.
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("persistence error: {0}")]
    Persistence(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
