use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration. `field` names the offending key.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A non-finite value appeared somewhere in the engine.
    #[error("numeric failure at {location}: {detail}")]
    Numeric { location: String, detail: String },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn numeric(location: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            location: location.into(),
            detail: detail.into(),
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
