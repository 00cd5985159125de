//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value in {context} at particle {particle}, step {step}")]
    NonFinite {
        context: String,
        particle: usize,
        step: usize,
    },

    #[error("negative weight {weight} at step {step} (state {state})")]
    NegativeWeight {
        weight: f64,
        step: usize,
        state: f64,
    },

    #[error("regression at step {step} is ill-conditioned (cond {cond:.3e} > {threshold:.3e})")]
    RegressionSingular {
        step: usize,
        cond: f64,
        threshold: f64,
    },

    #[error("control does not match the paths it is evaluated on: {0}")]
    ControlMismatch(String),

    #[error("action cells must be disjoint")]
    OverlappingCells,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("optimizer aborted: {0}")]
    OptimizerAborted(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
