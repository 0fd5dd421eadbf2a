use std::cmp::Ordering;

use super::TrainError;

/// Probabilities strictly above this are predicted as surges.
pub const DECISION_THRESHOLD: f64 = 0.5;

pub fn predict_label(probability: f64) -> u8 {
    u8::from(probability > DECISION_THRESHOLD)
}

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<(), TrainError> {
    if scores.len() != labels.len() {
        return Err(TrainError::Metric(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(TrainError::Metric("no samples to score".into()));
    }
    Ok(())
}

/// Fraction of samples whose thresholded probability equals the label.
pub fn accuracy(probs: &[f64], labels: &[u8]) -> Result<f64, TrainError> {
    check_lengths(probs, labels)?;
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| predict_label(p) == y)
        .count();
    Ok(hits as f64 / probs.len() as f64)
}

/// Area under the ROC curve: the share of positive/negative pairs in which
/// the positive scores higher, ties counting one half.
///
/// Computed from midranks (the Mann-Whitney statistic), which gives the same
/// value as enumerating every pair.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64, TrainError> {
    check_lengths(scores, labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(TrainError::Metric("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(TrainError::Metric(format!(
            "AUC needs both classes, got {positives} positive and {negatives} negative"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // twice the rank sum of the positives, so midranks stay integral
    let mut doubled_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1..=end share the midrank (start+1+end)/2
        let doubled_midrank = (start + 1 + end) as u64;
        let tied_positives = order[start..end].iter().filter(|&&i| labels[i] == 1).count() as u64;
        doubled_rank_sum += doubled_midrank * tied_positives;
        start = end;
    }
    let p = positives as u64;
    let doubled_u = doubled_rank_sum - p * (p + 1);
    Ok(doubled_u as f64 / (2 * p * negatives as u64) as f64)
}
