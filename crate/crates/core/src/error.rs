use thiserror::Error;

/// Errors raised by the core toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid of {q} points per axis aliases truncation m = {m}; need q >= {}", 2 * m + 1)]
    Aliasing { q: usize, m: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A structural condition on the model failed, e.g. a declared bound on V''.
    #[error("{condition}: {detail}")]
    Condition { condition: String, detail: String },

    #[error("non-finite state at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },

    #[error("noise coefficient {value:e} below threshold {threshold:e}; residual control is singular")]
    SingularNoise { value: f64, threshold: f64 },

    #[error("every ensemble member aborted ({0} members)")]
    AllMembersAborted(usize),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("unsupported operation for {family}: {what}")]
    Unsupported { family: &'static str, what: String },
}

pub type Result<T> = std::result::Result<T, Error>;
