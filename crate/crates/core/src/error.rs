use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("vocabulary hash mismatch: model {expected:016x}, data {found:016x}")]
    VocabMismatch { expected: u64, found: u64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Autograd(#[from] admitsim_autograd::AutogradError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
