use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("capacity exceeded: {requested} elements requested, budget is {budget}")]
    Capacity { requested: u128, budget: u128 },

    #[error("gaussian fit failed: {0}")]
    FitFailure(String),

    #[error("sampler failure: {reason} (divergences: {divergences}, step size: {step_size:e})")]
    SamplerFailure {
        reason: String,
        divergences: usize,
        step_size: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
