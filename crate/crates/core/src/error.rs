use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The file is not an XRLD container or is missing required structure.
    #[error("format error: {0}")]
    Format(String),
    /// Header and payload disagree about sizes or offsets.
    #[error("corrupt container: {0}")]
    Corruption(String),
    /// Container version or dtype tag this build does not understand.
    #[error("unsupported version: {0}")]
    Version(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A requested array, field or option is not available.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Stage masks (initial / terminal) cannot be formed.
    #[error("staging error: {0}")]
    Staging(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
