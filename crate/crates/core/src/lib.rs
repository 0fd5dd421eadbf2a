//! Early warning of hospitalization surges from daily epidemiological
//! statistics.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`ingest`] parses the daily CSV feed into a gap-free [`ingest::FeatureSeries`].
//! 2. [`dataset`] cuts 28-day windows ending on each reference date and labels
//!    them 1 when the next week's mean hospitalization exceeds the past week's.
//! 3. [`models`] holds four recurrent classifiers (single LSTM, stacked LSTM,
//!    bidirectional LSTM and an encoder/decoder with dot-product attention), all
//!    trained with hand-written backpropagation through time on the [`nncore`]
//!    kernel.
//! 4. [`train_eval`] runs momentum SGD with early stopping and scores the held-out
//!    window by accuracy and rank-based AUC.

pub mod dataset;
pub mod ingest;
pub mod models;
pub mod nncore;
pub mod train_eval;

pub use dataset::{DatasetSplit, DateRange, NormStats, WindowSample, WindowSpec};
pub use ingest::{DailyRecord, FeatureSeries, Schema};
pub use models::{Architecture, Model, ModelConfig};
pub use nncore::{Mode, NnError, Tensor2};
pub use train_eval::{EvalReport, TrainConfig, TrainError, TrainHistory, TrendReport};

