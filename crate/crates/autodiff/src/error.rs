use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} expects {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: &'static str,
        shape: Vec<usize>,
    },
    #[error("softmax mask leaves no position unmasked")]
    InvalidMask,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged: non-finite gradient for parameter `{param}`")]
    Divergence { param: String },
    #[error("index {index} out of range for {what} of size {size}")]
    Index {
        what: &'static str,
        index: usize,
        size: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
