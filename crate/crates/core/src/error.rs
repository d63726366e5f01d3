use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("malformed {kind} in {path}: {reason}")]
    Format {
        kind: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("unsupported PGM maxval {maxval} in {path} (only 255 is supported)")]
    UnsupportedMaxval { path: PathBuf, maxval: u32 },

    #[error("{path}: line {line}: {reason}")]
    Csv {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error families, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Config,
    Io,
    Numeric,
    Input,
}

impl Error {
    pub fn family(&self) -> ErrorFamily {
        match self {
            Error::Config(_) => ErrorFamily::Config,
            Error::Io { .. }
            | Error::Format { .. }
            | Error::UnsupportedMaxval { .. }
            | Error::Csv { .. } => ErrorFamily::Io,
            Error::Numeric(_) => ErrorFamily::Numeric,
            Error::Dimension(_) | Error::InvalidInput(_) => ErrorFamily::Input,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
