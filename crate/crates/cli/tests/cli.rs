use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::NaiveDate;
use surgecast::report::parse_trend_csv;

fn fixture() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/us_daily_2020.csv")
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surgecast"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A short run so the end-to-end paths stay quick.
fn quick_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("quick.toml");
    let text = format!("[paths]\ninput = {:?}\n[train]\nepochs = 3\n{extra}", fixture());
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["forecast-everything"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));

    let o = run(&["train", "--epochs", "3"], dir.path());
    assert_eq!(o.status.code(), Some(1));

    let o = run(&["train", "--arch", "gru"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seq2seq_attention"));

    let o = run(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("grad-check"));
}

#[test]
fn tiny_grad_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["grad-check", "--arch", "seq2seq_attention", "--tiny"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let value: f64 = text
        .split("max relative error ")
        .nth(1)
        .and_then(|rest| rest.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(value < 1e-4, "{text}");
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["build-dataset", "--input", "nowhere.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.csv"));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[train]\nepochs = 0\n").unwrap();
    let o = run(&["train", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn build_train_evaluate_plot_predict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = quick_config(d, "");
    let cfg = cfg.to_str().unwrap();

    let o = run(&["build-dataset", "--config", cfg, "--dataset", "ds.json"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("152 samples (train 81, dev 10, test 61)"));

    let o = run(&["train", "--config", cfg, "--arch", "lstm", "--dataset", "ds.json", "--model", "m.json"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = run(&["evaluate", "--config", cfg, "--dataset", "ds.json", "--model", "m.json", "--out", "eval"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).is_empty(), "{}", stderr(&o));
    let eval = fs::read_to_string(d.join("eval/eval.csv")).unwrap();
    assert!(eval.starts_with("accuracy,auc,tp,fp,tn,fn,n\n"));
    assert!(eval.trim_end().ends_with(",61"));

    let o = run(&["plot", "--config", cfg, "--dataset", "ds.json", "--model", "m.json", "--out", "plot"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trend = parse_trend_csv(&fs::read_to_string(d.join("plot/trend.csv")).unwrap()).unwrap();
    assert_eq!(trend.entries.len(), 61);
    let flips = trend.actual_flips();
    assert_eq!(flips.len(), 1);
    assert_eq!((flips[0].from, flips[0].to), (1, 0));
    assert_eq!(flips[0].last, NaiveDate::from_ymd_opt(2020, 7, 22).unwrap());
    let svg = fs::read_to_string(d.join("plot/trend.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("2020-07-22"));
    let history = fs::read_to_string(d.join("plot/history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("epoch,train_loss,dev_loss"));
    assert_eq!(history.lines().count(), 4);

    let o = run(&["predict", "--config", cfg, "--model", "m.json", "--out", "pred"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let preds = fs::read_to_string(d.join("pred/predictions.csv")).unwrap();
    assert_eq!(preds.lines().next(), Some("date,probability,predicted"));
    assert!(preds.trim_end().lines().last().unwrap().starts_with("2020-09-15,"));

    // a dataset split with another seed has another fingerprint
    let o = run(&["build-dataset", "--config", cfg, "--seed", "1", "--dataset", "other.json"], d);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["evaluate", "--config", cfg, "--dataset", "other.json", "--model", "m.json", "--out", "eval2"], d);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
}

#[test]
fn feature_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let narrow = quick_config(
        d,
        "[data]\nfeatures = [\"hospitalizedCurrently\", \"positive\", \"death\"]\n[model]\narchitecture = \"lstm\"\nhidden_sizes = [4]\n",
    );
    let o = run(&["train", "--config", narrow.to_str().unwrap(), "--arch", "lstm", "--dataset", "narrow.json", "--model", "m.json"], d);
    assert_eq!(o.status.code(), Some(2), "missing dataset file: {}", stderr(&o));

    let o = run(&["build-dataset", "--config", narrow.to_str().unwrap(), "--dataset", "narrow.json"], d);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["train", "--config", narrow.to_str().unwrap(), "--arch", "lstm", "--dataset", "narrow.json", "--model", "m.json"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = run(&["build-dataset", "--input", &fixture(), "--dataset", "wide.json"], d);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["evaluate", "--dataset", "wide.json", "--model", "m.json", "--out", "r"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("shape"), "{}", stderr(&o));
}

#[test]
fn damaged_model_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = quick_config(d, "[model]\narchitecture = \"bilstm\"\nhidden_sizes = [4]\n");
    let cfg = cfg.to_str().unwrap();
    let o = run(&["train", "--config", cfg, "--arch", "bilstm", "--model", "m.json"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(d.join("m.json")).unwrap();

    fs::write(d.join("cut.json"), &text[..text.len() / 3]).unwrap();
    let o = run(&["evaluate", "--config", cfg, "--model", "cut.json"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("corrupt"), "{}", stderr(&o));

    fs::write(d.join("alien.json"), text.replacen("\"bilstm\"", "\"mamba\"", 1)).unwrap();
    let o = run(&["evaluate", "--config", cfg, "--model", "alien.json"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown architecture"), "{}", stderr(&o));
}
