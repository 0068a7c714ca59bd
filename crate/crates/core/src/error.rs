use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("unknown loss `{0}`")]
    UnknownLoss(String),

    #[error("non-finite state in trajectory {trajectory} at step {step}")]
    NonFinite { trajectory: usize, step: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("sample size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("tape mismatch: {0}")]
    TapeMismatch(String),

    #[error("degenerate variance {value:e} at trajectory {trajectory}, step {step}")]
    DegenerateVariance {
        value: f64,
        trajectory: usize,
        step: usize,
    },

    #[error("zero denominator: ground truth {0} vanishes on the whole ensemble")]
    ZeroDenominator(&'static str),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
