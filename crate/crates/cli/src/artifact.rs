//! Versioned JSON files: the frozen dataset and the trained model.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use surgecast_core::models::{Architecture, Model, ModelConfig};
use surgecast_core::{DatasetSplit, DateRange, NormStats, Tensor2, TrainConfig, TrainHistory, WindowSpec};

use crate::error::CliError;
use crate::json;

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Hex SHA-256 of a file's bytes.
pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn encode<T: Serialize>(value: &T) -> Vec<u8> {
    json::to_bytes(value).expect("artifacts hold only finite numbers and string keys")
}

fn format_error(path: &Path, reason: String) -> CliError {
    CliError::Format {
        path: path.into(),
        reason,
    }
}

/// Parses `bytes` as a JSON document carrying `format_version`, keeping
/// truncation and syntax damage apart from a foreign version.
fn decode(path: &Path, bytes: &[u8], version: u32) -> Result<serde_json::Value, CliError> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| {
        let reason = e.to_string();
        if e.is_eof() || e.is_syntax() || e.is_io() {
            CliError::Corrupt {
                path: path.into(),
                reason,
            }
        } else {
            format_error(path, reason)
        }
    })?;
    match value.get("format_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(version) => Ok(value),
        Some(v) => Err(format_error(path, format!("format_version {v}, this build reads {version}"))),
        None => Err(format_error(path, "missing format_version".into())),
    }
}

fn from_value<T: DeserializeOwned>(path: &Path, value: serde_json::Value) -> Result<T, CliError> {
    serde_json::from_value(value).map_err(|e| format_error(path, e.to_string()))
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Labeled windows and their split, frozen so that every later run sees
/// the same samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetArtifact {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub target: String,
    pub window: WindowSpec,
    pub train_range: DateRange,
    pub test_range: DateRange,
    pub dev_count: usize,
    /// Cells filled per feature when the series was built.
    pub imputation_log: Vec<usize>,
    /// Raw, unnormalized samples.
    pub split: DatasetSplit,
}

impl DatasetArtifact {
    pub fn num_samples(&self) -> usize {
        self.split.train.len() + self.split.dev.len() + self.split.test.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode(self)
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write_file(path, &self.to_bytes())
    }

    /// The artifact and the fingerprint of the bytes read.
    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let bytes = read(path)?;
        let artifact = from_value(path, decode(path, &bytes, DATASET_FORMAT_VERSION)?)?;
        Ok((artifact, fingerprint(&bytes)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub feature_names: Vec<String>,
    pub target: String,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub split_seed: u64,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    /// Fingerprint of the dataset artifact the model was trained on.
    pub dataset_fingerprint: String,
    pub train_config: TrainConfig,
    pub history: TrainHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub architecture: String,
    pub config: ModelConfig,
    pub norm: NormStats,
    pub parameters: Vec<NamedTensor>,
    pub metadata: TrainingMetadata,
}

impl ModelFile {
    pub fn new(model: &Model, norm: NormStats, metadata: TrainingMetadata) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            architecture: model.architecture().to_string(),
            config: model.config().clone(),
            norm,
            parameters: model
                .named_parameters()
                .map(|(name, t)| NamedTensor {
                    name: name.to_string(),
                    shape: [t.rows(), t.cols()],
                    values: t.to_rows(),
                })
                .collect(),
            metadata,
        }
    }

    /// Rebuilds the model, checking names and shapes against the config.
    pub fn model(&self) -> Result<Model, CliError> {
        let named = self
            .parameters
            .iter()
            .map(|p| {
                let [rows, cols] = p.shape;
                let t = if p.values.is_empty() {
                    Tensor2::zeros(0, cols)
                } else {
                    Tensor2::from_rows(&p.values)?
                };
                if t.shape() != (rows, cols) {
                    return Err(CliError::Shape(format!(
                        "tensor {} declares {rows}x{cols} but holds {}x{}",
                        p.name,
                        t.rows(),
                        t.cols()
                    )));
                }
                Ok((p.name.clone(), t))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(Model::from_parameters(self.config.clone(), named)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode(self)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::from_bytes(path, &read(path)?)
    }

    /// `path` only labels errors.
    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self, CliError> {
        let format = |reason: String| format_error(path, reason);
        let raw = decode(path, bytes, MODEL_FORMAT_VERSION)?;
        let tag = raw
            .get("architecture")
            .and_then(serde_json::Value::as_str)
            .ok_or_else(|| format("missing architecture tag".into()))?;
        let arch: Architecture = tag.parse().map_err(|_| format(format!("unknown architecture {tag:?}")))?;
        let file: ModelFile = from_value(path, raw)?;
        if file.config.architecture != arch {
            return Err(format(format!(
                "architecture tag {arch} disagrees with config {}",
                file.config.architecture
            )));
        }
        if file.norm.num_features() != file.config.input_features {
            return Err(format(format!(
                "normalizer covers {} features, model expects {}",
                file.norm.num_features(),
                file.config.input_features
            )));
        }
        file.model()?;
        Ok(file)
    }
}
