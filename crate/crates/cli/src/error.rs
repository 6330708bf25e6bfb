use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing dependency {}: run `admitsim {producer}` first", path.display())]
    Missing { path: PathBuf, producer: &'static str },
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] admitsim_core::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 0 success, 1 configuration or input error, 2 missing upstream
    /// artifact, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use admitsim_core::Error as E;
        match self {
            CliError::Missing { .. } => 2,
            CliError::Core(E::Numerical(_) | E::NotConverged { .. }) => 3,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(source: std::io::Error) -> Self {
        CliError::Io { context: "i/o error".into(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
