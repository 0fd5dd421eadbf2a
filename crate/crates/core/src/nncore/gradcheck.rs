use super::{NnError, Tensor2};

/// A scalar loss over a set of parameter tensors, with its analytic
/// gradient. Implementors must be deterministic (no dropout sampling).
pub trait Objective {
    fn parameters_mut(&mut self) -> &mut [Tensor2];
    fn loss(&mut self) -> Result<f64, NnError>;
    /// Loss and one gradient tensor per parameter, in `parameters_mut` order.
    fn loss_and_gradients(&mut self) -> Result<(f64, Vec<Tensor2>), NnError>;

    /// `loss(θ + step·e) − loss(θ − step·e)` for one parameter entry `e`,
    /// leaving the parameters unchanged. Override when the difference can
    /// be formed without subtracting two rounded losses.
    fn loss_difference(&mut self, param: usize, entry: usize, step: f64) -> Result<f64, NnError> {
        let original = self.parameters_mut()[param].data()[entry];
        self.parameters_mut()[param].data_mut()[entry] = original + step;
        let plus = self.loss();
        self.parameters_mut()[param].data_mut()[entry] = original - step;
        let minus = self.loss();
        self.parameters_mut()[param].data_mut()[entry] = original;
        let (plus, minus) = (plus?, minus?);
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NnError::NonFinite(format!(
                "loss became non-finite perturbing parameter {param} entry {entry}"
            )));
        }
        Ok(plus - minus)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(parameter index, entry index)` of the worst entry.
    pub worst_entry: Option<(usize, usize)>,
    pub entries_checked: usize,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares every analytic gradient entry against a central difference
/// with the given step and reports the maximum relative error.
pub fn grad_check<O: Objective + ?Sized>(
    objective: &mut O,
    step: f64,
) -> Result<GradCheckReport, NnError> {
    let (base, grads) = objective.loss_and_gradients()?;
    if !base.is_finite() {
        return Err(NnError::NonFinite(format!("loss is {base}")));
    }
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_entry: None,
        entries_checked: 0,
    };
    for (pi, grad) in grads.iter().enumerate() {
        for ei in 0..grad.len() {
            let numeric = objective.loss_difference(pi, ei, step)? / (2.0 * step);
            let err = relative_error(grad.data()[ei], numeric);
            report.entries_checked += 1;
            if err > report.max_relative_error || report.worst_entry.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                report.worst_entry = Some((pi, ei));
            }
        }
    }
    Ok(report)
}
