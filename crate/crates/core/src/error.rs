use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("invalid {field}: {message}")]
    Validation { field: &'static str, message: String },

    #[error("unregistered machine: no configuration for user {username:?} on {mac}")]
    Unregistered { username: String, mac: String },

    #[error("a scan is already in progress for machine {0}")]
    ScanInProgress(String),

    #[error("duplicate observation for {0} in one scan")]
    DuplicateObservation(String),

    #[error("{path}: {message}")]
    Fingerprint { path: String, message: String },

    #[error("store error: {0}")]
    Store(#[from] rusqlite::Error),

    #[error("corrupt store row: {0}")]
    CorruptRow(String),

    #[error("injected fault at store write #{0}")]
    InjectedFault(usize),
}

impl Error {
    pub fn io(path: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(field: &'static str, message: impl Into<String>) -> Self {
        Error::Validation {
            field,
            message: message.into(),
        }
    }

    /// True for caller mistakes (bad arguments, unknown machine) as opposed
    /// to storage or I/O failures.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. }
                | Error::Unregistered { .. }
                | Error::ScanInProgress(_)
                | Error::DuplicateObservation(_)
        )
    }
}
