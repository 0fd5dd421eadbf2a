//! CSV and SVG renderings of evaluation results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use surgecast_core::train_eval::TrendEntry;
use surgecast_core::{EvalReport, TrainHistory, TrendReport};

use crate::artifact::write_file;
use crate::error::CliError;

const DATE_FORMAT: &str = "%Y-%m-%d";

pub fn trend_csv(trend: &TrendReport) -> String {
    let mut out = String::from("date,probability,predicted,actual\n");
    for e in &trend.entries {
        let _ = writeln!(
            out,
            "{},{:?},{},{}",
            e.date.format(DATE_FORMAT),
            e.probability,
            e.predicted,
            e.actual
        );
    }
    out
}

/// Inverse of [`trend_csv`].
pub fn parse_trend_csv(text: &str) -> Result<TrendReport, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some("date,probability,predicted,actual") => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    let entries = lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || format!("line {}: {line:?}", i + 2);
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(TrendEntry {
                date: NaiveDate::parse_from_str(f[0], DATE_FORMAT).map_err(|_| bad())?,
                probability: f[1].parse().map_err(|_| bad())?,
                predicted: f[2].parse().map_err(|_| bad())?,
                actual: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(TrendReport { entries })
}

pub fn eval_csv(report: &EvalReport) -> String {
    let c = report.confusion;
    let auc = report.auc.map_or(String::new(), |a| format!("{a:?}"));
    format!(
        "accuracy,auc,tp,fp,tn,fn,n\n{:?},{auc},{},{},{},{},{}\n",
        report.accuracy, c.tp, c.fp, c.tn, c.fn_, report.n
    )
}

pub fn history_csv(history: &TrainHistory) -> String {
    let mut out = String::from("epoch,train_loss,dev_loss\n");
    for (i, (t, d)) in history.train_loss.iter().zip(&history.dev_loss).enumerate() {
        let _ = writeln!(out, "{},{t:?},{d:?}", i + 1);
    }
    out
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

/// Step path through `(x, y)` points, each value held across its day.
fn step_path(xs: &[f64], ys: &[f64], half: f64) -> String {
    let mut d = String::new();
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        if i == 0 {
            let _ = write!(d, "M{:.2},{y:.2}", x - half);
        } else {
            let _ = write!(d, " H{:.2} V{y:.2}", x - half);
        }
    }
    if let Some(&x) = xs.last() {
        let _ = write!(d, " H{:.2}", x + half);
    }
    d
}

/// Line chart of the predicted probability with the predicted and true
/// labels drawn as steps.
pub fn trend_svg(trend: &TrendReport) -> String {
    let n = trend.entries.len();
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let slot = plot_w / n.max(1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| LEFT + slot * (i as f64 + 0.5)).collect();
    let y = |v: f64| TOP + plot_h * (1.0 - v);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    );
    for v in [0.0, 0.5, 1.0] {
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#ccc" stroke-dasharray="2,3"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            yy + 4.0
        );
    }
    for (i, e) in trend.entries.iter().enumerate() {
        if i % 7 == 0 || i + 1 == n {
            let x = xs[i];
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/><text x="{x:.2}" y="{:.2}" text-anchor="end" transform="rotate(-45 {x:.2} {:.2})">{}</text>"##,
                TOP + plot_h,
                TOP + plot_h + 4.0,
                TOP + plot_h + 16.0,
                TOP + plot_h + 16.0,
                e.date.format(DATE_FORMAT)
            );
        }
    }

    if n > 0 {
        let actual: Vec<f64> = trend.entries.iter().map(|e| y(f64::from(e.actual))).collect();
        let predicted: Vec<f64> = trend.entries.iter().map(|e| y(f64::from(e.predicted))).collect();
        let _ = writeln!(
            s,
            r##"<path d="{}" fill="none" stroke="#222" stroke-width="2.5"/>"##,
            step_path(&xs, &actual, slot / 2.0)
        );
        let _ = writeln!(
            s,
            r##"<path d="{}" fill="none" stroke="#d62728" stroke-width="1.5" stroke-dasharray="6,3"/>"##,
            step_path(&xs, &predicted, slot / 2.0)
        );
        let points: Vec<String> = xs
            .iter()
            .zip(&trend.entries)
            .map(|(x, e)| format!("{x:.2},{:.2}", y(e.probability)))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##,
            points.join(" ")
        );
        for (x, e) in xs.iter().zip(&trend.entries) {
            let _ = writeln!(
                s,
                r##"<circle cx="{x:.2}" cy="{:.2}" r="2" fill="#1f77b4"/>"##,
                y(e.probability)
            );
        }
    }

    let lx = WIDTH - RIGHT + 15.0;
    let legend = [
        ("#222", "", "actual label"),
        ("#d62728", r#" stroke-dasharray="6,3""#, "predicted label"),
        ("#1f77b4", "", "probability"),
    ];
    for (i, (color, dash, label)) in legend.iter().enumerate() {
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{label}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `trend.csv`, `trend.svg` and `history.csv` into `out_dir`.
pub fn emit_plot(trend: &TrendReport, history: &TrainHistory, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if trend.entries.is_empty() {
        return Err(CliError::Usage("nothing to plot: the trend report is empty".into()));
    }
    let files = [
        ("trend.csv", trend_csv(trend)),
        ("trend.svg", trend_svg(trend)),
        ("history.csv", history_csv(history)),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = out_dir.join(name);
        write_file(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
