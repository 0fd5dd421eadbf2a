//! Mini-batch training with early stopping, and the held-out evaluation.

mod metrics;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetSplit, WindowSample};
use crate::models::Model;
use crate::nncore::{Mode, NnError, SgdMomentum, Tensor2};

pub use metrics::{accuracy, auc, predict_label, DECISION_THRESHOLD};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error("training diverged: non-finite monitoring loss after epoch {epoch}")]
    MonitorDivergence { epoch: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Epochs without an improvement of at least `min_improvement` before
    /// training stops.
    pub early_stop_patience: usize,
    pub min_improvement: f64,
    /// Seeds both the per-epoch shuffle and the dropout masks.
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 16,
            learning_rate: 0.01,
            momentum: 0.9,
            early_stop_patience: 10,
            min_improvement: 1e-6,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if self.epochs == 0 || self.batch_size == 0 || self.early_stop_patience == 0 {
            return bad(format!(
                "epochs ({}), batch_size ({}) and early_stop_patience ({}) must all be at least 1",
                self.epochs, self.batch_size, self.early_stop_patience
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.min_improvement.is_finite() && self.min_improvement >= 0.0) {
            return bad(format!("min_improvement must be non-negative, got {}", self.min_improvement));
        }
        Ok(())
    }
}

/// Per-epoch losses; epochs are counted from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean train-mode loss over the epoch's samples.
    pub train_loss: Vec<f64>,
    /// Eval-mode loss on the dev set after each epoch (on the training set
    /// when the dev set is empty).
    pub dev_loss: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

fn windows_and_labels(samples: &[WindowSample]) -> (Vec<&Tensor2>, Vec<f64>) {
    samples
        .iter()
        .map(|s| (&s.features, f64::from(s.label)))
        .unzip()
}

/// Trains `model` on `split.train` and returns the parameters from the epoch
/// with the lowest dev loss.
pub fn train(mut model: Model, split: &DatasetSplit, cfg: &TrainConfig) -> Result<(Model, TrainHistory), TrainError> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(TrainError::Config("the training set is empty".into()));
    }
    let monitor = if split.dev.is_empty() { &split.train } else { &split.dev };
    let (monitor_windows, monitor_labels) = windows_and_labels(monitor);

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    dropout_rng.set_stream(1);
    let mut optimizer = SgdMomentum::new(cfg.learning_rate, cfg.momentum, model.parameters());

    let mut history = TrainHistory {
        train_loss: Vec::new(),
        dev_loss: Vec::new(),
        best_epoch: 0,
        stopped_epoch: 0,
    };
    let mut best_loss = f64::INFINITY;
    let mut best_params = model.parameters().to_vec();
    let mut order: Vec<usize> = (0..split.train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let windows: Vec<&Tensor2> = chunk.iter().map(|&i| &split.train[i].features).collect();
            let labels: Vec<f64> = chunk.iter().map(|&i| f64::from(split.train[i].label)).collect();
            let (loss, grads) = model.loss_and_gradients(&windows, &labels, Mode::Train, &mut dropout_rng)?;
            let batch = batch + 1;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Divergence { epoch, batch });
            }
            optimizer.step(model.parameters_mut(), &grads)?;
            if model.parameters().iter().any(|p| !p.is_finite()) {
                return Err(TrainError::Divergence { epoch, batch });
            }
            loss_sum += loss * chunk.len() as f64;
        }
        history.train_loss.push(loss_sum / split.train.len() as f64);

        let dev_loss = model.loss(&monitor_windows, &monitor_labels)?;
        if !dev_loss.is_finite() {
            return Err(TrainError::MonitorDivergence { epoch });
        }
        history.dev_loss.push(dev_loss);
        history.stopped_epoch = epoch;
        if history.best_epoch == 0 || dev_loss <= best_loss - cfg.min_improvement {
            best_loss = dev_loss;
            history.best_epoch = epoch;
            best_params.clone_from_slice(model.parameters());
        } else if epoch - history.best_epoch >= cfg.early_stop_patience {
            break;
        }
    }
    model.parameters_mut().clone_from_slice(&best_params);
    Ok((model, history))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `None` when the samples hold a single class and AUC is undefined.
    pub auc: Option<f64>,
    pub confusion: Confusion,
    pub n: usize,
}

/// Eval-mode probabilities for each sample, in input order.
pub fn predict_samples(model: &Model, samples: &[WindowSample]) -> Result<Vec<f64>, TrainError> {
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let windows: Vec<&Tensor2> = samples.iter().map(|s| &s.features).collect();
    Ok(model.predict_proba(&windows)?)
}

pub fn evaluate(model: &Model, samples: &[WindowSample]) -> Result<EvalReport, TrainError> {
    let probs = predict_samples(model, samples)?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let accuracy = accuracy(&probs, &labels)?;
    let auc = match auc(&probs, &labels) {
        Ok(v) => Some(v),
        Err(TrainError::Metric(_)) if labels.iter().all(|&y| y == labels[0]) => None,
        Err(e) => return Err(e),
    };
    let mut confusion = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&p, &y) in probs.iter().zip(&labels) {
        match (predict_label(p), y) {
            (1, 1) => confusion.tp += 1,
            (1, _) => confusion.fp += 1,
            (0, 0) => confusion.tn += 1,
            _ => confusion.fn_ += 1,
        }
    }
    Ok(EvalReport {
        accuracy,
        auc,
        confusion,
        n: samples.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendEntry {
    pub date: NaiveDate,
    pub probability: f64,
    pub predicted: u8,
    pub actual: u8,
}

/// Predicted against true labels by reference date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub entries: Vec<TrendEntry>,
}

/// A change of label between two consecutive entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flip {
    /// Last date carrying the old label.
    pub last: NaiveDate,
    pub from: u8,
    pub to: u8,
}

impl TrendReport {
    pub fn actual_flips(&self) -> Vec<Flip> {
        self.flips(|e| e.actual)
    }

    pub fn predicted_flips(&self) -> Vec<Flip> {
        self.flips(|e| e.predicted)
    }

    fn flips(&self, label: impl Fn(&TrendEntry) -> u8) -> Vec<Flip> {
        self.entries
            .windows(2)
            .filter(|w| label(&w[0]) != label(&w[1]))
            .map(|w| Flip {
                last: w[0].date,
                from: label(&w[0]),
                to: label(&w[1]),
            })
            .collect()
    }
}

pub fn trend_report(model: &Model, samples: &[WindowSample]) -> Result<TrendReport, TrainError> {
    let probs = predict_samples(model, samples)?;
    let mut entries: Vec<TrendEntry> = samples
        .iter()
        .zip(probs)
        .map(|(s, p)| TrendEntry {
            date: s.reference_date,
            probability: p,
            predicted: predict_label(p),
            actual: s.label,
        })
        .collect();
    entries.sort_by_key(|e| e.date);
    Ok(TrendReport { entries })
}
