use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the training, protocol and audit stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("dimension too small: need at least {required}, got {actual}")]
    DimensionTooSmall { required: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid label {value} at sample {index}: {reason}")]
    Label {
        index: usize,
        value: f64,
        reason: &'static str,
    },

    #[error("empty minibatch")]
    EmptyBatch,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: u64,
        message: String,
    },

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("non-finite value in party {party} at sync round {round}")]
    NumericalDivergence { party: usize, round: usize },

    #[error("initial parameter block of party {0} is zero; the witness construction needs a nonzero block")]
    DegenerateInit(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
