use std::io;
use std::path::PathBuf;

use surgecast_core::dataset::DatasetError;
use surgecast_core::ingest::IngestError;
use surgecast_core::{NnError, TrainError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}: unsupported file format: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: file is corrupt or truncated: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Train(TrainError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Numeric(_) => 3,
            CliError::Train(e) => match e {
                TrainError::Divergence { .. } | TrainError::MonitorDivergence { .. } => 3,
                TrainError::Nn(NnError::NonFinite(_)) => 3,
                TrainError::Config(_) => 1,
                _ => 2,
            },
            _ => 2,
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Shape(m) => CliError::Shape(m),
            NnError::Config(m) => CliError::Config(m),
            NnError::NonFinite(m) => CliError::Numeric(m),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Nn(nn) => nn.into(),
            other => CliError::Train(other),
        }
    }
}
