//! Labeled windows, date-based splits and feature normalization.

use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::FeatureSeries;
use crate::nncore::Tensor2;

/// Features whose pooled standard deviation falls below this normalize to 0.
pub const MIN_STDDEV: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("series does not cover {needed_from}..={needed_to} required for reference date {reference}")]
    Range {
        reference: NaiveDate,
        needed_from: NaiveDate,
        needed_to: NaiveDate,
    },
    #[error("unknown target column {0:?}")]
    UnknownColumn(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot fit a normalizer on an empty training set")]
    EmptyFit,
    #[error("sample has {got} features, normalizer expects {expected}")]
    FeatureMismatch { expected: usize, got: usize },
}

/// Inclusive calendar interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, DatasetError> {
        if start > end {
            return Err(DatasetError::Config(format!("range {start}..={end} is empty")));
        }
        Ok(Self { start, end })
    }

    pub fn days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn overlaps(&self, other: &DateRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn iter(&self) -> impl Iterator<Item = NaiveDate> {
        let start = self.start;
        (0..self.days() as u64).map(move |d| start + Days::new(d))
    }
}

/// Window length and label horizons, in days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub lag: usize,
    pub horizon: usize,
    pub baseline: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            lag: 28,
            horizon: 7,
            baseline: 7,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.lag == 0 || self.horizon == 0 || self.baseline == 0 {
            return Err(DatasetError::Config(format!(
                "lag, horizon and baseline must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub reference_date: NaiveDate,
    /// `lag x F`; row `t` is day `reference_date - lag + 1 + t`.
    pub features: Tensor2,
    pub label: u8,
}

fn covered_rows(
    series: &FeatureSeries,
    reference: NaiveDate,
    before: usize,
    after: usize,
) -> Result<(usize, usize), DatasetError> {
    let range_err = || DatasetError::Range {
        reference,
        needed_from: reference - Days::new(before as u64),
        needed_to: reference + Days::new(after as u64),
    };
    let first = reference
        .checked_sub_days(Days::new(before as u64))
        .and_then(|d| series.index_of(d))
        .ok_or_else(range_err)?;
    let last = reference
        .checked_add_days(Days::new(after as u64))
        .and_then(|d| series.index_of(d))
        .ok_or_else(range_err)?;
    Ok((first, last))
}

/// 1 iff the target's mean over the `horizon` days after `reference_date`
/// strictly exceeds its mean over the `baseline` days ending on it.
pub fn compute_label(
    series: &FeatureSeries,
    target_column: &str,
    reference_date: NaiveDate,
    horizon: usize,
    baseline: usize,
) -> Result<u8, DatasetError> {
    if horizon == 0 || baseline == 0 {
        return Err(DatasetError::Config("horizon and baseline must be positive".into()));
    }
    let col = series
        .feature_index(target_column)
        .ok_or_else(|| DatasetError::UnknownColumn(target_column.to_string()))?;
    let (first, last) = covered_rows(series, reference_date, baseline - 1, horizon)?;
    let today = first + baseline - 1;
    let mean = |rows: std::ops::RangeInclusive<usize>, n: usize| {
        rows.map(|r| series.rows.get(r, col)).sum::<f64>() / n as f64
    };
    let past = mean(first..=today, baseline);
    let next = mean(today + 1..=last, horizon);
    Ok(u8::from(next > past))
}

/// The `lag` rows ending on (and including) `reference_date`.
pub fn build_window(
    series: &FeatureSeries,
    reference_date: NaiveDate,
    lag: usize,
) -> Result<Tensor2, DatasetError> {
    if lag == 0 {
        return Err(DatasetError::Config("lag must be positive".into()));
    }
    let (first, _) = covered_rows(series, reference_date, lag - 1, 0)?;
    let f = series.num_features();
    let data = series.rows.data()[first * f..(first + lag) * f].to_vec();
    Ok(Tensor2::from_vec(lag, f, data).expect("slice length matches lag x F"))
}

/// One labeled window per reference date in `reference_range`, ascending.
pub fn build_dataset(
    series: &FeatureSeries,
    target_column: &str,
    reference_range: DateRange,
    spec: WindowSpec,
) -> Result<Vec<WindowSample>, DatasetError> {
    spec.validate()?;
    reference_range
        .iter()
        .map(|date| {
            Ok(WindowSample {
                reference_date: date,
                features: build_window(series, date, spec.lag)?,
                label: compute_label(series, target_column, date, spec.horizon, spec.baseline)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<WindowSample>,
    pub dev: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    pub seed: u64,
}

/// Partitions samples by reference date. `dev_count` training-range
/// samples are drawn uniformly without replacement and removed from the
/// training list; samples outside both ranges are dropped.
pub fn split_by_date(
    samples: &[WindowSample],
    train_range: DateRange,
    test_range: DateRange,
    dev_count: usize,
    seed: u64,
) -> Result<DatasetSplit, DatasetError> {
    if train_range.overlaps(&test_range) {
        return Err(DatasetError::Config(format!(
            "train range {}..={} overlaps test range {}..={}",
            train_range.start, train_range.end, test_range.start, test_range.end
        )));
    }
    let in_train: Vec<&WindowSample> = samples
        .iter()
        .filter(|s| train_range.contains(s.reference_date))
        .collect();
    if dev_count >= in_train.len() && dev_count > 0 {
        return Err(DatasetError::Config(format!(
            "dev_count {dev_count} must be smaller than the {} training-range samples",
            in_train.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dev_idx: BTreeSet<usize> =
        rand::seq::index::sample(&mut rng, in_train.len(), dev_count).into_iter().collect();
    let mut train = Vec::with_capacity(in_train.len() - dev_count);
    let mut dev = Vec::with_capacity(dev_count);
    for (i, s) in in_train.into_iter().enumerate() {
        if dev_idx.contains(&i) {
            dev.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    let test = samples
        .iter()
        .filter(|s| test_range.contains(s.reference_date))
        .cloned()
        .collect();
    Ok(DatasetSplit {
        train,
        dev,
        test,
        seed,
    })
}

/// Per-feature z-score statistics pooled over every row of every
/// training window. Standard deviations use the population convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

pub fn fit_normalizer(train: &[WindowSample]) -> Result<NormStats, DatasetError> {
    let first = train.first().ok_or(DatasetError::EmptyFit)?;
    let f = first.features.cols();
    let mut sum = vec![0.0; f];
    let mut count = 0usize;
    for s in train {
        if s.features.cols() != f {
            return Err(DatasetError::FeatureMismatch {
                expected: f,
                got: s.features.cols(),
            });
        }
        for r in 0..s.features.rows() {
            for (acc, v) in sum.iter_mut().zip(s.features.row(r)) {
                *acc += v;
            }
        }
        count += s.features.rows();
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0; f];
    for s in train {
        for r in 0..s.features.rows() {
            for ((acc, v), m) in sq.iter_mut().zip(s.features.row(r)).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
    }
    let stddev = sq.iter().map(|s| (s / count as f64).sqrt()).collect();
    Ok(NormStats { mean, stddev })
}

impl NormStats {
    pub fn num_features(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, features: &Tensor2) -> Result<(), DatasetError> {
        if features.cols() != self.mean.len() {
            return Err(DatasetError::FeatureMismatch {
                expected: self.mean.len(),
                got: features.cols(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, sample: &WindowSample) -> Result<WindowSample, DatasetError> {
        Ok(WindowSample {
            features: self.apply_features(&sample.features)?,
            ..sample.clone()
        })
    }

    pub fn apply_features(&self, features: &Tensor2) -> Result<Tensor2, DatasetError> {
        self.check(features)?;
        let mut out = features.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.stddev) {
                *v = if *s < MIN_STDDEV { 0.0 } else { (*v - m) / s };
            }
        }
        Ok(out)
    }

    /// Undoes [`NormStats::apply_features`]; degenerate columns come back
    /// as their mean.
    pub fn invert_features(&self, features: &Tensor2) -> Result<Tensor2, DatasetError> {
        self.check(features)?;
        let mut out = features.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.stddev) {
                *v = if *s < MIN_STDDEV { *m } else { *v * s + m };
            }
        }
        Ok(out)
    }

    pub fn apply_all(&self, samples: &[WindowSample]) -> Result<Vec<WindowSample>, DatasetError> {
        samples.iter().map(|s| self.apply(s)).collect()
    }
}
