use thiserror::Error;

/// Errors surfaced by the planning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a precondition (shape, length, finiteness).
    #[error("contract violation: {0}")]
    Contract(String),
    /// A configuration or argument value is out of its allowed range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// Training produced a non-finite or exploding loss.
    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },
    /// Scene generation could not satisfy the expert-feasibility invariant.
    #[error("scene generation failed for seed {seed} after {attempts} attempts")]
    Generation { seed: u64, attempts: usize },
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn parameter(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
