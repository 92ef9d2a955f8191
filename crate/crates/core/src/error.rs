use thiserror::Error;

/// Errors raised by the front-end and its tooling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("signal too short: {len} samples, need at least {needed}")]
    SignalTooShort { len: usize, needed: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("negative power input at bin {bin}, frame {frame}")]
    NegativePower { bin: usize, frame: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("evaluation point is not smooth: {0}")]
    NonSmooth(String),

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
