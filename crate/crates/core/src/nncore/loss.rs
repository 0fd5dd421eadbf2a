/// Probabilities are clamped to `[ε, 1 − ε]` before taking logarithms.
pub const BCE_EPSILON: f64 = 1e-12;

fn clamp(p: f64) -> f64 {
    p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON)
}

/// `−[y·ln p + (1−y)·ln(1−p)]`
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = clamp(p);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// `∂loss/∂p`; zero where the clamp is active.
pub fn bce_grad(p: f64, y: f64) -> f64 {
    if !(BCE_EPSILON..=1.0 - BCE_EPSILON).contains(&p) {
        return 0.0;
    }
    -y / p + (1.0 - y) / (1.0 - p)
}

/// Mean loss over a batch.
pub fn bce_mean(probs: &[f64], labels: &[f64]) -> f64 {
    assert_eq!(probs.len(), labels.len());
    if probs.is_empty() {
        return 0.0;
    }
    probs.iter().zip(labels).map(|(&p, &y)| bce_loss(p, y)).sum::<f64>() / probs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn analytic_values() {
        assert_abs_diff_eq!(bce_loss(0.5, 1.0), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(bce_loss(0.5, 0.0), std::f64::consts::LN_2, epsilon = 1e-15);
        assert!(bce_loss(1.0 - BCE_EPSILON, 1.0) < 1e-11);
        assert!(bce_loss(0.0, 0.0) < 1e-11);
        assert!(bce_loss(0.0, 1.0).is_finite());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-5;
        for &p in &[0.1, 0.5, 0.9] {
            for &y in &[0.0, 1.0] {
                let n = (bce_loss(p + h, y) - bce_loss(p - h, y)) / (2.0 * h);
                let a = bce_grad(p, y);
                assert!((a - n).abs() / a.abs().max(n.abs()) < 1e-6, "p={p} y={y}");
            }
        }
    }

    #[test]
    fn loss_is_non_negative() {
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            assert!(bce_loss(p, 0.0) >= 0.0);
            assert!(bce_loss(p, 1.0) >= 0.0);
        }
    }

    #[test]
    fn batch_mean() {
        assert_abs_diff_eq!(
            bce_mean(&[0.5, 0.5], &[0.0, 1.0]),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
    }
}
