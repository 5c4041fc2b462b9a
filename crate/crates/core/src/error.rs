use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("{param} = {value}: {reason}")]
    Domain {
        param: &'static str,
        value: String,
        reason: String,
    },

    /// A structured input (geometry, model, problem definition) is inconsistent.
    #[error("invalid {what}: {reason}")]
    Validation { what: &'static str, reason: String },

    /// A numerical routine failed to reach its tolerance or produced an
    /// inconsistent result.
    #[error("numerical failure in {routine}: {reason}")]
    Numerical {
        routine: &'static str,
        reason: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {reason}", path.display())]
    Parse { path: PathBuf, reason: String },
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Invalid,
    Numerical,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Domain { .. } | Error::Validation { .. } | Error::Parse { .. } => {
                ErrorKind::Invalid
            }
            Error::Numerical { .. } => ErrorKind::Numerical,
            Error::Io { .. } => ErrorKind::Io,
        }
    }

    pub(crate) fn domain(param: &'static str, value: impl ToString, reason: impl Into<String>) -> Self {
        Error::Domain {
            param,
            value: value.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn numerical(routine: &'static str, reason: impl Into<String>) -> Self {
        Error::Numerical {
            routine,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
