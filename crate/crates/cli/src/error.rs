use std::path::Path;
use std::process::ExitCode;

use thiserror::Error;
use vulngraph::datasets::DatasetError;
use vulngraph::embedding::EmbeddingError;
use vulngraph::model::ModelError;
use vulngraph::pipeline::PipelineError;
use vulngraph::training::{CheckpointError, TrainError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Domain(_) => ExitCode::from(1),
            CliError::Io(_) | CliError::Config(_) => ExitCode::from(2),
        }
    }
}

fn from_model(e: ModelError) -> CliError {
    match e {
        ModelError::Config(c) => CliError::Config(c.to_string()),
        ModelError::Embedding(EmbeddingError::Io(io)) => CliError::Io(io.to_string()),
        other => CliError::Domain(other.to_string()),
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Dataset(d @ DatasetError::Io { .. }) => CliError::Io(d.to_string()),
            PipelineError::Embedding(EmbeddingError::Io(io)) => CliError::Io(io.to_string()),
            PipelineError::Checkpoint(c) => c.into(),
            PipelineError::Model(m) | PipelineError::Train(TrainError::Model(m)) => from_model(m),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Model(m) => from_model(m),
            other => CliError::Io(other.to_string()),
        }
    }
}
