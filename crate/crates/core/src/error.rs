use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, mismatched lengths, unknown identifiers.
    #[error("configuration error: {0}")]
    Config(String),

    /// Secondary-path identification blew up.
    #[error("secondary-path identification failed: {0}")]
    Identification(String),

    /// A theory formula was evaluated where it has no meaning
    /// (for example a non-positive `λ_max·Φ`).
    #[error("theory undefined: {0}")]
    TheoryUndefined(String),

    /// Inputs fall outside the regime a steady-state formula covers.
    #[error("theory out of range: {0}")]
    TheoryOutOfRange(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
