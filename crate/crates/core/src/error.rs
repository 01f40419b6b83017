use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("truncated file {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("no samples for class pair ({pos}, {neg})")]
    EmptyClassPair { pos: u8, neg: u8 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("divergence: non-finite value encountered in {0}")]
    Divergence(&'static str),
    #[error("infeasible distortion target {target}: minimum achievable is {min}")]
    Infeasible { target: f64, min: f64 },
    #[error("Blahut-Arimoto did not converge in {iterations} iterations (rate {rate}, distortion {distortion})")]
    NonConvergence {
        iterations: usize,
        rate: f64,
        distortion: f64,
    },
    #[error("missing variance data for client {client}, minibatch {minibatch}")]
    MissingVariance { client: usize, minibatch: usize },
    #[error("instance too large: {atoms} atoms exceeds cap {cap}")]
    SupportTooLarge { atoms: usize, cap: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Divergence(_) | Error::NonConvergence { .. } | Error::Infeasible { .. }
        )
    }

    /// True for failures reading or interpreting data files.
    pub fn is_data(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::BadMagic { .. }
                | Error::Truncated { .. }
                | Error::CountMismatch { .. }
                | Error::EmptyClassPair { .. }
                | Error::EmptyDataset
        )
    }
}
