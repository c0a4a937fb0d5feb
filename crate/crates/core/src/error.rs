//! Crate-wide error type.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller violated an operation precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An internal contract was broken (e.g. a fitness function returned a
    /// value outside `[0, 1]`).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A problem tied to a specific file (missing pair, bad label value,
    /// dimension mismatch, unsupported encoding).
    #[error("{path}: {message}", path = .path.display())]
    File { path: PathBuf, message: String },

    /// Underlying I/O failure.
    #[error("{path}: {source}", path = .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed structured-text document (bundle, config, history log).
    #[error("{path}:{line}: {message}", path = .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Bundle format version not understood by this build.
    #[error("bundle version mismatch: file declares {found}, this build reads {expected}")]
    Version { found: u32, expected: u32 },

    /// Stored checksum does not match the decoded bytes.
    #[error("checksum mismatch in '{key}': stored {stored:08x}, computed {computed:08x}")]
    Checksum {
        key: String,
        stored: u32,
        computed: u32,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn file(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::File {
            path: path.into(),
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors a user can fix by changing inputs or configuration,
    /// as opposed to runtime failures. The CLI maps these to exit code 2.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::File { .. }
                | Error::Parse { .. }
                | Error::Version { .. }
                | Error::Checksum { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
