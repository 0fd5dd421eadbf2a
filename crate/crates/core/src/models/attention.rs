//! Dot-product attention of one decoder state over a sequence of encoder
//! states.

use crate::nncore::{dot, NnError, Tensor2};

#[derive(Debug, Clone, PartialEq)]
pub struct Attended {
    /// `Σ_t weights[t] · encoder_states[t]`
    pub context: Vec<f64>,
    /// Softmax of `decoder_state · encoder_states[t]`.
    pub weights: Vec<f64>,
}

fn check(decoder_state: &[f64], encoder_states: &Tensor2) -> Result<(), NnError> {
    if decoder_state.len() != encoder_states.cols() || encoder_states.rows() == 0 {
        return Err(NnError::Shape(format!(
            "attention: decoder state of width {} against encoder states {}x{}",
            decoder_state.len(),
            encoder_states.rows(),
            encoder_states.cols()
        )));
    }
    Ok(())
}

pub fn attention(decoder_state: &[f64], encoder_states: &Tensor2) -> Result<Attended, NnError> {
    check(decoder_state, encoder_states)?;
    let scores: Vec<f64> = (0..encoder_states.rows())
        .map(|t| dot(decoder_state, encoder_states.row(t)))
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    let weights: Vec<f64> = exp.iter().map(|e| e / total).collect();
    let mut context = vec![0.0; decoder_state.len()];
    for (t, &a) in weights.iter().enumerate() {
        for (c, v) in context.iter_mut().zip(encoder_states.row(t)) {
            *c += a * v;
        }
    }
    Ok(Attended { context, weights })
}

/// Gradients `(∂decoder_state, ∂encoder_states)` given `∂context`.
pub fn attention_backward(
    decoder_state: &[f64],
    encoder_states: &Tensor2,
    weights: &[f64],
    d_context: &[f64],
) -> Result<(Vec<f64>, Tensor2), NnError> {
    check(decoder_state, encoder_states)?;
    if weights.len() != encoder_states.rows() || d_context.len() != decoder_state.len() {
        return Err(NnError::Shape("attention backward: cached weights do not match".into()));
    }
    let steps = encoder_states.rows();
    // ∂L/∂weights, then through the softmax
    let d_weights: Vec<f64> = (0..steps)
        .map(|t| dot(d_context, encoder_states.row(t)))
        .collect();
    let mean = dot(weights, &d_weights);
    let d_scores: Vec<f64> = weights
        .iter()
        .zip(&d_weights)
        .map(|(a, g)| a * (g - mean))
        .collect();

    let mut d_decoder = vec![0.0; decoder_state.len()];
    let mut d_encoder = Tensor2::zeros(steps, decoder_state.len());
    for t in 0..steps {
        let e = encoder_states.row(t);
        for (dd, v) in d_decoder.iter_mut().zip(e) {
            *dd += d_scores[t] * v;
        }
        for ((de, dc), q) in d_encoder.row_mut(t).iter_mut().zip(d_context).zip(decoder_state) {
            *de = weights[t] * dc + d_scores[t] * q;
        }
    }
    Ok((d_decoder, d_encoder))
}
