//! End-to-end steps shared by the subcommands and the tests.

use std::fs;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surgecast_core::dataset::{self, build_window, fit_normalizer, split_by_date};
use surgecast_core::ingest::{build_feature_series, parse_daily_csv, DailyRecord};
use surgecast_core::models::{init_model, Architecture, ModelConfig, WindowObjective};
use surgecast_core::nncore::{grad_check, GradCheckReport};
use surgecast_core::train_eval::{self, predict_label};
use surgecast_core::{DatasetSplit, EvalReport, FeatureSeries, Schema, Tensor2, TrendReport};

use crate::artifact::{DatasetArtifact, ModelFile, TrainingMetadata, DATASET_FORMAT_VERSION};
use crate::config::RunConfig;
use crate::error::CliError;

pub fn read_records(cfg: &RunConfig, input: &Path) -> Result<Vec<DailyRecord>, CliError> {
    let text = fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
    let schema = Schema::new(cfg.data.date_column.clone(), &cfg.data.features);
    Ok(parse_daily_csv(&text, &schema)?)
}

/// Gap-filled series from `data.series_start` through `end`.
pub fn series_until(cfg: &RunConfig, records: &[DailyRecord], end: NaiveDate) -> Result<FeatureSeries, CliError> {
    Ok(build_feature_series(records, &cfg.data.features, cfg.data.series_start, end)?)
}

/// Builds and splits every labeled window named by the configuration.
pub fn build_dataset(cfg: &RunConfig, input: &Path) -> Result<DatasetArtifact, CliError> {
    let d = &cfg.data;
    let records = read_records(cfg, input)?;
    let reference = d.reference_range()?;
    let end = reference.end + Days::new(d.horizon as u64);
    let series = series_until(cfg, &records, end)?;
    let samples = dataset::build_dataset(&series, &d.target, reference, d.window())?;
    let split = split_by_date(&samples, d.train_range()?, d.test_range()?, d.dev_count, d.split_seed)?;
    Ok(DatasetArtifact {
        format_version: DATASET_FORMAT_VERSION,
        feature_names: series.feature_names.clone(),
        target: d.target.clone(),
        window: d.window(),
        train_range: d.train_range()?,
        test_range: d.test_range()?,
        dev_count: d.dev_count,
        imputation_log: series.imputation_log,
        split,
    })
}

/// Loads the artifact at `path` when given, otherwise builds it from the
/// input CSV without writing it. Returns the artifact and its fingerprint.
pub fn obtain_dataset(
    cfg: &RunConfig,
    path: Option<&Path>,
    input: &Path,
) -> Result<(DatasetArtifact, String), CliError> {
    match path {
        Some(p) => DatasetArtifact::load(p),
        None => {
            let artifact = build_dataset(cfg, input)?;
            let fp = artifact.fingerprint();
            Ok((artifact, fp))
        }
    }
}

/// Fits the normalizer on the training windows, trains, and packages the
/// best-epoch model.
pub fn train_model(cfg: &RunConfig, artifact: &DatasetArtifact, fingerprint: &str) -> Result<ModelFile, CliError> {
    let features = artifact.feature_names.len();
    let model_cfg = cfg.model_config(features);
    if model_cfg.lag != artifact.window.lag {
        return Err(CliError::Shape(format!(
            "configured lag {} but the dataset windows span {} days",
            model_cfg.lag, artifact.window.lag
        )));
    }
    let norm = fit_normalizer(&artifact.split.train)?;
    let split = DatasetSplit {
        train: norm.apply_all(&artifact.split.train)?,
        dev: norm.apply_all(&artifact.split.dev)?,
        test: Vec::new(),
        seed: artifact.split.seed,
    };
    let model = init_model(model_cfg)?;
    let (model, history) = train_eval::train(model, &split, &cfg.train)?;
    let metadata = TrainingMetadata {
        feature_names: artifact.feature_names.clone(),
        target: artifact.target.clone(),
        init_seed: cfg.model.init_seed,
        shuffle_seed: cfg.train.shuffle_seed,
        split_seed: artifact.split.seed,
        best_epoch: history.best_epoch,
        stopped_epoch: history.stopped_epoch,
        dataset_fingerprint: fingerprint.to_string(),
        train_config: cfg.train.clone(),
        history,
    };
    Ok(ModelFile::new(&model, norm, metadata))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub trend: TrendReport,
}

fn check_features(file: &ModelFile, names: &[String]) -> Result<(), CliError> {
    if names.len() != file.config.input_features {
        return Err(CliError::Shape(format!(
            "model expects {} input features but the data has {}",
            file.config.input_features,
            names.len()
        )));
    }
    if names != file.metadata.feature_names.as_slice() {
        return Err(CliError::Shape("data feature columns differ from the model's".into()));
    }
    Ok(())
}

/// Scores the held-out windows.
pub fn evaluate_model(file: &ModelFile, artifact: &DatasetArtifact) -> Result<Evaluation, CliError> {
    check_features(file, &artifact.feature_names)?;
    let model = file.model()?;
    let test = file.norm.apply_all(&artifact.split.test)?;
    Ok(Evaluation {
        report: train_eval::evaluate(&model, &test)?,
        trend: train_eval::trend_report(&model, &test)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub date: NaiveDate,
    pub probability: f64,
    pub predicted: u8,
}

/// Surge probability for every day of the input that has a full window
/// behind it, whether or not its label is known yet.
pub fn forecast(cfg: &RunConfig, file: &ModelFile, input: &Path) -> Result<Vec<Forecast>, CliError> {
    check_features(file, &cfg.data.features)?;
    let records = read_records(cfg, input)?;
    let last = records
        .last()
        .map(|r| r.date)
        .ok_or_else(|| CliError::Usage(format!("{} holds no data rows", input.display())))?;
    let series = series_until(cfg, &records, last)?;
    let lag = file.config.lag;
    if series.len() < lag {
        return Err(CliError::Usage(format!(
            "need at least {lag} days from {} to form a window, the input ends on {last}",
            cfg.data.series_start
        )));
    }
    let model = file.model()?;
    let windows = (lag - 1..series.len())
        .map(|i| {
            let date = series.date_at(i);
            Ok((date, file.norm.apply_features(&build_window(&series, date, lag)?)?))
        })
        .collect::<Result<Vec<(NaiveDate, Tensor2)>, CliError>>()?;
    let refs: Vec<&Tensor2> = windows.iter().map(|(_, w)| w).collect();
    let probs = model.predict_proba(&refs)?;
    Ok(windows
        .iter()
        .zip(probs)
        .map(|((date, _), p)| Forecast {
            date: *date,
            probability: p,
            predicted: predict_label(p),
        })
        .collect())
}

pub const TINY_HIDDEN: usize = 4;
pub const TINY_LAG: usize = 5;
pub const TINY_FEATURES: usize = 3;

/// Finite-difference check of one architecture on a random labeled window.
/// `tiny` uses hidden width 4, lag 5 and 3 features; otherwise the
/// configured model is checked entry by entry, which takes minutes.
pub fn run_grad_check(cfg: &RunConfig, arch: Architecture, tiny: bool, seed: u64) -> Result<GradCheckReport, CliError> {
    let model_cfg = if tiny {
        ModelConfig::tiny(arch, TINY_HIDDEN, TINY_LAG, TINY_FEATURES).with_seed(seed)
    } else {
        let mut c = cfg.clone();
        c.model.architecture = arch;
        if c.model.hidden_sizes.len() != arch.arity() {
            c.model.hidden_sizes.clear();
        }
        c.model.init_seed = seed;
        c.model_config(cfg.data.features.len())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lag, f) = (model_cfg.lag, model_cfg.input_features);
    let window = Tensor2::from_vec(lag, f, (0..lag * f).map(|_| rng.gen_range(-1.5..1.5)).collect())?;
    let label = f64::from(rng.gen_range(0..=1u8));
    let mut model = init_model(model_cfg)?;
    let mut objective = WindowObjective {
        model: &mut model,
        window: &window,
        label,
    };
    Ok(grad_check(&mut objective, GRAD_CHECK_STEP)?)
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;
