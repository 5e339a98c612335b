//! Error type shared across the library.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug)]
pub enum Error {
    /// Matrix or tensor dimensions do not line up.
    Shape {
        context: String,
        expected: String,
        actual: String,
    },
    /// An operation was called in a way its contract forbids
    /// (wrong value space, empty input, incompatible mode, ...).
    Usage(String),
    /// A configuration failed validation; lists the offending fields.
    Validation(Vec<String>),
    /// A file could not be parsed; carries the location.
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    /// Training produced a non-finite loss.
    TrainingDiverged { model: String, epoch: usize },
    Io(std::io::Error),
    /// Serialization or deserialization of a bundle/metadata file failed.
    Format(String),
}

impl Error {
    pub fn shape(context: impl Into<String>, expected: impl fmt::Display, actual: impl fmt::Display) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Error::Usage(message.into())
    }

    pub fn validation(issues: Vec<String>) -> Self {
        Error::Validation(issues)
    }

    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { context, expected, actual } => {
                write!(f, "shape mismatch in {context}: expected {expected}, got {actual}")
            }
            Error::Usage(msg) => write!(f, "usage error: {msg}"),
            Error::Validation(issues) => {
                write!(f, "invalid configuration: {}", issues.join("; "))
            }
            Error::Parse { path, line, message } => {
                write!(f, "parse error in {path}:{line}: {message}")
            }
            Error::TrainingDiverged { model, epoch } => {
                write!(f, "training diverged: {model} produced a non-finite loss at epoch {epoch}")
            }
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
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

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
