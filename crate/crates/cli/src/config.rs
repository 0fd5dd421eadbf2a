//! Run configuration: a TOML document whose every key is optional and
//! defaults to the reference training recipe.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use surgecast_core::models::{Architecture, ModelConfig};
use surgecast_core::{DateRange, TrainConfig, WindowSpec};

use crate::error::CliError;

/// The 20 national statistics used as model inputs by default.
pub const DEFAULT_FEATURES: [&str; 20] = [
    "positive",
    "negative",
    "pending",
    "hospitalizedCurrently",
    "hospitalizedCumulative",
    "inIcuCurrently",
    "inIcuCumulative",
    "onVentilatorCurrently",
    "onVentilatorCumulative",
    "recovered",
    "death",
    "hospitalized",
    "totalTestResults",
    "total",
    "posNeg",
    "deathIncrease",
    "hospitalizedIncrease",
    "negativeIncrease",
    "positiveIncrease",
    "totalTestResultsIncrease",
];

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub input: PathBuf,
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            input: "fixtures/us_daily_2020.csv".into(),
            dataset: "surgecast-out/dataset.json".into(),
            model: "surgecast-out/model.json".into(),
            out: "surgecast-out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub date_column: String,
    /// Column whose weekly means decide the label; must be one of `features`.
    pub target: String,
    pub features: Vec<String>,
    /// Observations before this day only seed the forward fill.
    pub series_start: NaiveDate,
    pub lag: usize,
    pub horizon: usize,
    pub baseline: usize,
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    pub dev_count: usize,
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            date_column: "date".into(),
            target: "hospitalizedCurrently".into(),
            features: DEFAULT_FEATURES.iter().map(|s| s.to_string()).collect(),
            series_start: date(2020, 3, 1),
            lag: 28,
            horizon: 7,
            baseline: 7,
            train_start: date(2020, 4, 1),
            train_end: date(2020, 6, 30),
            test_start: date(2020, 7, 1),
            test_end: date(2020, 8, 30),
            dev_count: 10,
            split_seed: 0,
        }
    }
}

impl DataConfig {
    pub fn window(&self) -> WindowSpec {
        WindowSpec {
            lag: self.lag,
            horizon: self.horizon,
            baseline: self.baseline,
        }
    }

    pub fn train_range(&self) -> Result<DateRange, CliError> {
        Ok(DateRange::new(self.train_start, self.train_end)?)
    }

    pub fn test_range(&self) -> Result<DateRange, CliError> {
        Ok(DateRange::new(self.test_start, self.test_end)?)
    }

    /// Every reference date, train and test, in one range.
    pub fn reference_range(&self) -> Result<DateRange, CliError> {
        Ok(DateRange::new(
            self.train_start.min(self.test_start),
            self.train_end.max(self.test_end),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub architecture: Architecture,
    /// Empty means the architecture's default sizes.
    pub hidden_sizes: Vec<usize>,
    pub dropout_rate: f64,
    pub init_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            architecture: Architecture::Seq2seqAttention,
            hidden_sizes: Vec::new(),
            dropout_rate: 0.2,
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub data: DataConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Parses the document; call [`RunConfig::validate`] once overrides are in.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.data;
        if d.features.is_empty() {
            return Err(CliError::Config("data.features is empty".into()));
        }
        if !d.features.contains(&d.target) {
            return Err(CliError::Config(format!(
                "target column {:?} must also be listed in data.features",
                d.target
            )));
        }
        let invalid = |e: CliError| CliError::Config(e.to_string());
        d.window().validate().map_err(|e| invalid(e.into()))?;
        let (train, test) = (d.train_range().map_err(invalid)?, d.test_range().map_err(invalid)?);
        if train.overlaps(&test) {
            return Err(CliError::Config("train and test date ranges overlap".into()));
        }
        self.model_config(d.features.len()).validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn model_config(&self, input_features: usize) -> ModelConfig {
        let mut cfg = ModelConfig::new(self.model.architecture, input_features);
        if !self.model.hidden_sizes.is_empty() {
            cfg.hidden_sizes = self.model.hidden_sizes.clone();
        }
        cfg.dropout_rate = self.model.dropout_rate;
        cfg.lag = self.data.lag;
        cfg.init_seed = self.model.init_seed;
        cfg
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }
}
