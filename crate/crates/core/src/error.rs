use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] snet_autodiff::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("incompatible checkpoint: {0}")]
    Compatibility(String),
}

impl Error {
    /// Process exit status for this error: 2 configuration or usage, 3 data
    /// or IO, 4 divergence, 5 checkpoint incompatibility, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Tensor(snet_autodiff::Error::Config(_)) => 2,
            Error::Io { .. } | Error::Schema { .. } | Error::Data(_) => 3,
            Error::Divergence { .. } | Error::Tensor(snet_autodiff::Error::Divergence { .. }) => 4,
            Error::Compatibility(_) => 5,
            Error::Tensor(_) => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
