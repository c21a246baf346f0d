use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library reports. The variants map one-to-one onto the
/// broad categories the CLI turns into exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("range error: {0}")]
    Range(String),

    #[error("mapping error: {0}")]
    Mapping(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("length error: {0}")]
    Length(String),

    #[error("filter design error: {0}")]
    Design(String),

    #[error("invalid input on channel {channel}: {reason}")]
    InvalidChannel { channel: String, reason: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
