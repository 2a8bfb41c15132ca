//! Error type shared by every module in the crate.

use std::fmt;
use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Tensor or layer shapes do not line up; the message names both sides.
    Dimension(String),
    /// A value is outside the mathematical domain of an operation.
    Domain(String),
    /// An operation was called in the wrong order (e.g. backward before forward).
    State(String),
    /// A file could not be read or decoded.
    Input { path: PathBuf, reason: String },
    /// The dataset layout or contents are invalid.
    Dataset(String),
    /// An architecture spec is malformed or chains illegally.
    Spec(String),
    /// A run config file or value is invalid.
    Config(String),
    /// Training produced a non-finite value; the message carries fold/epoch context.
    Numeric(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(m) => write!(f, "dimension error: {m}"),
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::State(m) => write!(f, "state error: {m}"),
            Error::Input { path, reason } => {
                write!(f, "input error: {}: {reason}", path.display())
            }
            Error::Dataset(m) => write!(f, "dataset error: {m}"),
            Error::Spec(m) => write!(f, "spec error: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Numeric(m) => write!(f, "numeric error: {m}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
