use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message} at byte {offset} (line {line}, column {column})")]
    ConfigParse {
        path: PathBuf,
        message: String,
        offset: usize,
        line: usize,
        column: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{message}")]
    MissingData { message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing csv {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Core(#[from] distgen_core::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl CliError {
    /// Process exit status: 2 configuration, 3 data, 4 numerics, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigParse { .. } | CliError::Config(_) => 2,
            CliError::MissingData { .. } => 3,
            CliError::Core(e) if e.is_data() => 3,
            CliError::Core(e) if e.is_numeric() => 4,
            CliError::Core(distgen_core::Error::InvalidParameter(_)) => 2,
            CliError::Core(distgen_core::Error::DimensionMismatch { .. }) => 2,
            CliError::Core(distgen_core::Error::SupportTooLarge { .. }) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
