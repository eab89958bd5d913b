use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("non-finite activation at example {index}")]
    NonFiniteActivation { index: usize },

    #[error("power iteration did not converge after {iterations} iterations (best estimate {estimate})")]
    NoConvergence { iterations: usize, estimate: f64 },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("bad IDX magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    IdxMagic { path: String, expected: u32, found: u32 },

    #[error("truncated IDX payload in {path}: expected {expected} bytes, found {found}")]
    IdxTruncated { path: String, expected: usize, found: usize },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    #[error("unreachable privacy target: {0}")]
    UnreachableTarget(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
