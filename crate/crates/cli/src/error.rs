use std::path::Path;

use memseconv::circuit::CircuitError;
use memseconv::pipeline::PipelineError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error("internal contract violated: {0}")]
    Contract(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn format(path: &Path, reason: impl ToString) -> Self {
        CliError::Format {
            path: path.display().to_string(),
            reason: reason.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } => 3,
            CliError::Contract(_) => 4,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Circuit(c) => c.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<CircuitError> for CliError {
    fn from(e: CircuitError) -> Self {
        match e {
            CircuitError::NonPositiveDenominator(_) | CircuitError::SignalCount { .. } => {
                CliError::Contract(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}
