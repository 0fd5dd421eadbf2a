//! Daily statistics feed: CSV parsing and gap filling.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use chrono::{Days, NaiveDate};
use thiserror::Error;

use crate::nncore::Tensor2;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("row {row}: invalid date {value:?}")]
    Date { row: u64, value: String },
    #[error("row {row}: column {column:?} holds non-numeric or non-finite value {value:?}")]
    Value {
        row: u64,
        column: String,
        value: String,
    },
    #[error("date {0} appears more than once")]
    DuplicateDate(NaiveDate),
    #[error("no records between {start} and {end}")]
    EmptyRange { start: NaiveDate, end: NaiveDate },
    #[error("invalid range: {0}")]
    InvalidRange(String),
}

/// One day of raw statistics; `None` marks an empty cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub values: BTreeMap<String, Option<f64>>,
}

/// Columns a feed must carry. An empty `columns` list keeps every
/// non-date column.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub date_column: String,
    pub columns: Vec<String>,
}

impl Schema {
    pub fn new(date_column: impl Into<String>, columns: &[impl AsRef<str>]) -> Self {
        Self {
            date_column: date_column.into(),
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
        }
    }
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).ok()
}

/// Parses the feed into records sorted by ascending date.
///
/// Row numbers in errors are 1-based file lines, the header being line 1.
pub fn parse_daily_csv(raw_text: &str, schema: &Schema) -> Result<Vec<DailyRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(raw_text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Csv(e.to_string()))?
        .clone();
    let position = |name: &str| headers.iter().position(|h| h == name);
    let date_idx = position(&schema.date_column).ok_or_else(|| {
        IngestError::Schema(format!("date column {:?} not found in header", schema.date_column))
    })?;
    let columns: Vec<(String, usize)> = if schema.columns.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != date_idx)
            .map(|(i, h)| (h.to_string(), i))
            .collect()
    } else {
        schema
            .columns
            .iter()
            .map(|c| {
                position(c)
                    .map(|i| (c.clone(), i))
                    .ok_or_else(|| IngestError::Schema(format!("column {c:?} not found in header")))
            })
            .collect::<Result<_, _>>()?
    };

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for result in reader.records() {
        let record = result.map_err(|e| IngestError::Csv(e.to_string()))?;
        let row = record.position().map_or(0, |p| p.line());
        let raw_date = record.get(date_idx).unwrap_or("");
        let date = parse_date(raw_date).ok_or_else(|| IngestError::Date {
            row,
            value: raw_date.to_string(),
        })?;
        if !seen.insert(date) {
            return Err(IngestError::DuplicateDate(date));
        }
        let mut values = BTreeMap::new();
        for (name, idx) in &columns {
            let cell = record.get(*idx).unwrap_or("");
            let value = if cell.is_empty() {
                None
            } else {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Some(v),
                    _ => {
                        return Err(IngestError::Value {
                            row,
                            column: name.clone(),
                            value: cell.to_string(),
                        })
                    }
                }
            };
            values.insert(name.clone(), value);
        }
        records.push(DailyRecord { date, values });
    }
    records.sort_by_key(|r| r.date);
    Ok(records)
}

/// A gap-free daily feature matrix, one row per calendar day.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    pub start_date: NaiveDate,
    pub feature_names: Vec<String>,
    /// `T x F`
    pub rows: Tensor2,
    /// Number of imputed cells per feature.
    pub imputation_log: Vec<usize>,
}

impl FeatureSeries {
    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.rows() == 0
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn end_date(&self) -> NaiveDate {
        self.date_at(self.len() - 1)
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start_date + Days::new(index as u64)
    }

    /// Row index of `date`, if the series covers it.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start_date).num_days();
        (offset >= 0 && (offset as usize) < self.len()).then_some(offset as usize)
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.feature_index(name)?;
        Some((0..self.len()).map(|r| self.rows.get(r, c)).collect())
    }

    /// Renders the series in the feed's CSV layout.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date");
        for name in &self.feature_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for r in 0..self.len() {
            let _ = write!(out, "{}", self.date_at(r).format(DATE_FORMAT));
            for v in self.rows.row(r) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Restricts `records` to `[start_date, end_date]` and fills gaps: each
/// column carries its last observation forward (observations before
/// `start_date` included), and values still missing are set to 0.
pub fn build_feature_series(
    records: &[DailyRecord],
    feature_names: &[String],
    start_date: NaiveDate,
    end_date: NaiveDate,
) -> Result<FeatureSeries, IngestError> {
    if start_date > end_date {
        return Err(IngestError::InvalidRange(format!(
            "start {start_date} is after end {end_date}"
        )));
    }
    if feature_names.is_empty() {
        return Err(IngestError::Schema("feature list is empty".into()));
    }
    let mut distinct = HashSet::new();
    for name in feature_names {
        if !distinct.insert(name) {
            return Err(IngestError::Schema(format!("feature {name:?} listed twice")));
        }
    }
    let by_date: BTreeMap<NaiveDate, &DailyRecord> = records.iter().map(|r| (r.date, r)).collect();
    if by_date.range(start_date..=end_date).next().is_none() {
        return Err(IngestError::EmptyRange {
            start: start_date,
            end: end_date,
        });
    }

    let lookup = |record: &DailyRecord, name: &str| record.values.get(name).copied().flatten();
    let n_days = (end_date - start_date).num_days() as usize + 1;
    let n_feat = feature_names.len();
    let mut carry: Vec<Option<f64>> = feature_names
        .iter()
        .map(|name| {
            by_date
                .range(..start_date)
                .rev()
                .find_map(|(_, r)| lookup(r, name))
        })
        .collect();
    let mut rows = Tensor2::zeros(n_days, n_feat);
    let mut imputation_log = vec![0; n_feat];
    for day in 0..n_days {
        let date = start_date + Days::new(day as u64);
        let record = by_date.get(&date);
        for (c, name) in feature_names.iter().enumerate() {
            match record.and_then(|r| lookup(r, name)) {
                Some(v) => {
                    carry[c] = Some(v);
                    rows.set(day, c, v);
                }
                None => {
                    imputation_log[c] += 1;
                    rows.set(day, c, carry[c].unwrap_or(0.0));
                }
            }
        }
    }
    Ok(FeatureSeries {
        start_date,
        feature_names: feature_names.to_vec(),
        rows,
        imputation_log,
    })
}
