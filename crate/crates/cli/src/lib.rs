//! Command-line front end: `surgecast <subcommand> [flags]`.
//!
//! Subcommands build the windowed dataset, train one of the four
//! recurrent classifiers, evaluate it on the held-out window, forecast from
//! a fresh feed, emit the trend chart, and check gradients numerically.

pub mod artifact;
pub mod config;
pub mod error;
pub mod json;
pub mod pipeline;
pub mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use surgecast_core::models::Architecture;

use crate::artifact::{write_file, ModelFile};
use crate::config::RunConfig;
pub use crate::error::CliError;
use crate::pipeline::GRAD_CHECK_TOLERANCE;

#[derive(Debug, Parser)]
#[command(name = "surgecast", version, about = "Hospitalization surge classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cut labeled windows from the input CSV and write the dataset artifact.
    BuildDataset(Common),
    /// Train a model and write the model file.
    Train(Common),
    /// Score a model on the test window; writes eval.csv and trend.csv.
    Evaluate(Common),
    /// Surge probability for every day of the input with a full window.
    Predict(Common),
    /// Write trend.csv, trend.svg and history.csv.
    Plot(Common),
    /// Compare analytic gradients with central differences.
    GradCheck {
        #[command(flatten)]
        common: Common,
        /// Hidden width 4, lag 5 and 3 features instead of the configured sizes.
        #[arg(long)]
        tiny: bool,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "NAME", value_parser = parse_arch)]
    arch: Option<Architecture>,
    /// Dataset split seed for build-dataset; initialization and shuffle
    /// seed elsewhere.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn parse_arch(s: &str) -> Result<Architecture, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Architecture::ALL.iter().map(|a| a.as_str()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

/// Configuration with flag overrides applied, plus whether the dataset
/// path was named explicitly.
struct Resolved {
    cfg: RunConfig,
    dataset_named: bool,
}

fn resolve(common: &Common, seed_is_split: bool) -> Result<Resolved, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(arch) = common.arch {
        if arch != cfg.model.architecture && cfg.model.hidden_sizes.len() != arch.arity() {
            cfg.model.hidden_sizes.clear();
        }
        cfg.model.architecture = arch;
    }
    if let Some(seed) = common.seed {
        if seed_is_split {
            cfg.data.split_seed = seed;
        } else {
            cfg.model.init_seed = seed;
            cfg.train.shuffle_seed = seed;
        }
    }
    let p = &mut cfg.paths;
    let dataset_named = common.dataset.is_some();
    for (flag, slot) in [
        (&common.input, &mut p.input),
        (&common.dataset, &mut p.dataset),
        (&common.model, &mut p.model),
        (&common.out, &mut p.out),
    ] {
        if let Some(v) = flag {
            *slot = v.clone();
        }
    }
    cfg.validate()?;
    Ok(Resolved { cfg, dataset_named })
}

impl Resolved {
    /// The dataset artifact is read when named or already present;
    /// otherwise it is rebuilt in memory from the input CSV.
    fn dataset_path(&self) -> Option<&Path> {
        let p = self.cfg.paths.dataset.as_path();
        (self.dataset_named || p.exists()).then_some(p)
    }
}

fn warn_on_fingerprint(file: &ModelFile, fingerprint: &str, err: &mut dyn Write) {
    if file.metadata.dataset_fingerprint != fingerprint {
        let _ = writeln!(
            err,
            "warning: the model was trained on dataset {} but this dataset is {}",
            file.metadata.dataset_fingerprint, fingerprint
        );
    }
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::io("<stdout>", e);
    match command {
        Command::BuildDataset(common) => {
            let r = resolve(&common, true)?;
            let artifact = pipeline::build_dataset(&r.cfg, &r.cfg.paths.input)?;
            artifact.save(&r.cfg.paths.dataset)?;
            let s = &artifact.split;
            writeln!(
                out,
                "{} samples (train {}, dev {}, test {}) -> {}",
                artifact.num_samples(),
                s.train.len(),
                s.dev.len(),
                s.test.len(),
                r.cfg.paths.dataset.display()
            )
            .map_err(io)?;
        }
        Command::Train(common) => {
            let r = resolve(&common, false)?;
            let (artifact, fp) = pipeline::obtain_dataset(&r.cfg, r.dataset_path(), &r.cfg.paths.input)?;
            let file = pipeline::train_model(&r.cfg, &artifact, &fp)?;
            file.save(&r.cfg.paths.model)?;
            let m = &file.metadata;
            writeln!(
                out,
                "{}: best epoch {} of {} (dev loss {:.6}) -> {}",
                file.architecture,
                m.best_epoch,
                m.stopped_epoch,
                m.history.dev_loss[m.best_epoch - 1],
                r.cfg.paths.model.display()
            )
            .map_err(io)?;
        }
        Command::Evaluate(common) => {
            let r = resolve(&common, false)?;
            let file = ModelFile::load(&r.cfg.paths.model)?;
            let (artifact, fp) = pipeline::obtain_dataset(&r.cfg, r.dataset_path(), &r.cfg.paths.input)?;
            warn_on_fingerprint(&file, &fp, err);
            let eval = pipeline::evaluate_model(&file, &artifact)?;
            let dir = &r.cfg.paths.out;
            write_file(&dir.join("eval.csv"), report::eval_csv(&eval.report).as_bytes())?;
            write_file(&dir.join("trend.csv"), report::trend_csv(&eval.trend).as_bytes())?;
            let auc = eval.report.auc.map_or("undefined".to_string(), |a| format!("{a:.4}"));
            writeln!(
                out,
                "{}: accuracy {:.4} auc {} over {} test days",
                file.architecture, eval.report.accuracy, auc, eval.report.n
            )
            .map_err(io)?;
        }
        Command::Predict(common) => {
            let r = resolve(&common, false)?;
            let file = ModelFile::load(&r.cfg.paths.model)?;
            let forecasts = pipeline::forecast(&r.cfg, &file, &r.cfg.paths.input)?;
            let mut csv = String::from("date,probability,predicted\n");
            for f in &forecasts {
                csv.push_str(&format!("{},{:?},{}\n", f.date, f.probability, f.predicted));
            }
            let path = r.cfg.paths.out.join("predictions.csv");
            write_file(&path, csv.as_bytes())?;
            if let Some(last) = forecasts.last() {
                let verdict = if last.predicted == 1 { "surge" } else { "no surge" };
                writeln!(
                    out,
                    "{}: {verdict} expected (p = {:.4}); {} days -> {}",
                    last.date,
                    last.probability,
                    forecasts.len(),
                    path.display()
                )
                .map_err(io)?;
            }
        }
        Command::Plot(common) => {
            let r = resolve(&common, false)?;
            let file = ModelFile::load(&r.cfg.paths.model)?;
            let (artifact, fp) = pipeline::obtain_dataset(&r.cfg, r.dataset_path(), &r.cfg.paths.input)?;
            warn_on_fingerprint(&file, &fp, err);
            let eval = pipeline::evaluate_model(&file, &artifact)?;
            for path in report::emit_plot(&eval.trend, &file.metadata.history, &r.cfg.paths.out)? {
                writeln!(out, "{}", path.display()).map_err(io)?;
            }
        }
        Command::GradCheck { common, tiny } => {
            let r = resolve(&common, false)?;
            let archs = match common.arch {
                Some(a) => vec![a],
                None => Architecture::ALL.to_vec(),
            };
            let mut failed = Vec::new();
            for arch in archs {
                let report = pipeline::run_grad_check(&r.cfg, arch, tiny, r.cfg.model.init_seed)?;
                let ok = report.max_relative_error < GRAD_CHECK_TOLERANCE;
                writeln!(
                    out,
                    "{arch}: max relative error {:.3e} over {} entries ({})",
                    report.max_relative_error,
                    report.entries_checked,
                    if ok { "ok" } else { "FAIL" }
                )
                .map_err(io)?;
                if !ok {
                    failed.push(arch.to_string());
                }
            }
            if !failed.is_empty() {
                return Err(CliError::Numeric(format!(
                    "gradient check above {GRAD_CHECK_TOLERANCE:e} for {}",
                    failed.join(", ")
                )));
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let target: &mut dyn Write = if informational { out } else { err };
            let _ = write!(target, "{}", e.render());
            return if informational { 0 } else { 1 };
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
