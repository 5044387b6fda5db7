use thiserror::Error;

use gmesim_core::SimError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("scenario{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Scenario { line: Option<usize>, message: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Sim(#[from] SimError),

    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error("trace output: {0}")]
    Json(#[from] serde_json::Error),
}

