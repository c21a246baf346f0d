use std::path::PathBuf;

use thiserror::Error;

/// Failures of a command, each with a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Library(#[from] fudnn::Error),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("gradient check failed: max relative error {0:.3e} is not below {1:e}")]
    GradientMismatch(f64, f64),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// 1 usage, 2 input format, 3 numeric failure, 4 configuration.
    pub fn exit_code(&self) -> i32 {
        use fudnn::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Read { .. } | CliError::Write { .. } => 2,
            CliError::Json { .. } => 4,
            CliError::GradientMismatch(..) => 3,
            CliError::Library(e) => match e {
                E::Config(_) | E::Design(_) => 4,
                E::Numeric(_) | E::UndefinedCorrelation(_) => 3,
                E::Range(_)
                | E::Mapping(_)
                | E::Format(_)
                | E::Length(_)
                | E::InvalidChannel { .. }
                | E::Contract(_)
                | E::Shape(_)
                | E::Io { .. } => 2,
            },
        }
    }
}
