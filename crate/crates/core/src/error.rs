use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("state left the finite range at t = {time}")]
    BlowUp { time: f64 },
    #[error("degenerate model: {0}")]
    DegenerateModel(String),
    #[error("degenerate path: sigma_hat = {sigma_hat:e} is too small to normalise the statistic")]
    DegeneratePath { sigma_hat: f64 },
    #[error("insufficient sample: {have} paths, need at least {need}")]
    InsufficientSample { have: usize, need: usize },
    #[error("path carries no fine-grid data; simulate with keep_fine")]
    MissingFineData,
    #[error("alternative is not separated from the null: max |A(u)| = {max_abs:e}")]
    NotSeparated { max_abs: f64 },
    #[error("{failed} of {total} replications failed at eps = {eps} (limit 1%)")]
    TooManyFailures {
        eps: f64,
        failed: usize,
        total: usize,
    },
    #[error("line {line}: {message}")]
    Data { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
