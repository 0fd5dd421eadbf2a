//! The four recurrent surge classifiers.
//!
//! Every architecture maps a `lag x F` window to a probability through an
//! affine head and a sigmoid:
//!
//! * [`Architecture::Lstm`]: one LSTM layer, last hidden state into the head.
//! * [`Architecture::StackedLstm`]: three LSTM layers, each followed by a
//!   rectifier and dropout.
//! * [`Architecture::Bilstm`]: an LSTM over the window and a second one over
//!   the row-reversed window; both final states are concatenated.
//! * [`Architecture::Seq2seqAttention`]: an encoder LSTM (rectifier and dropout
//!   on its states) and a single decoder step fed a zero input, starting from
//!   the encoder's final state. The decoder state attends over the encoder
//!   states by dot product; decoder state and context are concatenated.

mod attention;
mod lstm;

pub use attention::{attention, attention_backward, Attended};
pub use lstm::{
    lstm_backward, lstm_cell_forward, lstm_layer_forward, lstm_unroll, LstmBackward, LstmGrads,
    LstmParams, LstmTrace,
};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nncore::{
    affine, affine_backward, bce_grad, bce_loss, dropout, relu_slope, sigmoid, Mode, NnError, Objective,
    Tensor2,
};

/// Width of the decoder's (all-zero) input vector.
pub const DECODER_INPUT_WIDTH: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Lstm,
    StackedLstm,
    Bilstm,
    Seq2seqAttention,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Lstm,
        Architecture::StackedLstm,
        Architecture::Bilstm,
        Architecture::Seq2seqAttention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Lstm => "lstm",
            Architecture::StackedLstm => "stacked_lstm",
            Architecture::Bilstm => "bilstm",
            Architecture::Seq2seqAttention => "seq2seq_attention",
        }
    }

    pub fn default_hidden_sizes(self) -> Vec<usize> {
        match self {
            Architecture::Lstm | Architecture::Bilstm => vec![64],
            Architecture::StackedLstm => vec![128, 64, 32],
            Architecture::Seq2seqAttention => vec![64, 64],
        }
    }

    /// Number of entries `hidden_sizes` must have.
    pub fn arity(self) -> usize {
        match self {
            Architecture::Lstm | Architecture::Bilstm => 1,
            Architecture::StackedLstm => 3,
            Architecture::Seq2seqAttention => 2,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| NnError::Config(format!("unknown architecture {s:?}")))
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub hidden_sizes: Vec<usize>,
    pub dropout_rate: f64,
    pub input_features: usize,
    pub lag: usize,
    pub init_seed: u64,
    /// Rectifier after each dropout-carrying LSTM layer. Switching it off
    /// (together with a zero dropout rate) leaves plain layer composition.
    #[serde(default = "default_true")]
    pub rectifier: bool,
}

impl ModelConfig {
    /// Default layer sizes, dropout 0.2 and a 28-day window.
    pub fn new(architecture: Architecture, input_features: usize) -> Self {
        Self {
            architecture,
            hidden_sizes: architecture.default_hidden_sizes(),
            dropout_rate: 0.2,
            input_features,
            lag: 28,
            init_seed: 0,
            rectifier: true,
        }
    }

    /// Every layer `hidden` wide.
    pub fn tiny(architecture: Architecture, hidden: usize, lag: usize, input_features: usize) -> Self {
        Self {
            hidden_sizes: vec![hidden; architecture.arity()],
            lag,
            ..Self::new(architecture, input_features)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.init_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let arch = self.architecture;
        if self.hidden_sizes.len() != arch.arity() {
            return Err(NnError::Config(format!(
                "{arch} needs {} hidden sizes, got {:?}",
                arch.arity(),
                self.hidden_sizes
            )));
        }
        if self.hidden_sizes.contains(&0) || self.input_features == 0 || self.lag == 0 {
            return Err(NnError::Config(format!(
                "layer sizes, input features and lag must be positive: {self:?}"
            )));
        }
        if arch == Architecture::Seq2seqAttention && self.hidden_sizes[0] != self.hidden_sizes[1] {
            return Err(NnError::Config(format!(
                "encoder and decoder widths must agree, got {:?}",
                self.hidden_sizes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NnError::Config(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Name and shape of every parameter tensor, in storage order.
    pub fn parameter_shapes(&self) -> Vec<(String, (usize, usize))> {
        let mut shapes = Vec::new();
        let mut lstm = |prefix: &str, input: usize, hidden: usize| {
            shapes.push((format!("{prefix}.w"), (input, 4 * hidden)));
            shapes.push((format!("{prefix}.u"), (hidden, 4 * hidden)));
            shapes.push((format!("{prefix}.b"), (1, 4 * hidden)));
        };
        let f = self.input_features;
        let hs = &self.hidden_sizes;
        let head_width = match self.architecture {
            Architecture::Lstm => {
                lstm("lstm", f, hs[0]);
                hs[0]
            }
            Architecture::StackedLstm => {
                let mut input = f;
                for (l, &h) in hs.iter().enumerate() {
                    lstm(&format!("lstm{l}"), input, h);
                    input = h;
                }
                input
            }
            Architecture::Bilstm => {
                lstm("forward", f, hs[0]);
                lstm("backward", f, hs[0]);
                2 * hs[0]
            }
            Architecture::Seq2seqAttention => {
                lstm("encoder", f, hs[0]);
                lstm("decoder", DECODER_INPUT_WIDTH, hs[1]);
                hs[0] + hs[1]
            }
        };
        shapes.push(("head.w".into(), (head_width, 1)));
        shapes.push(("head.b".into(), (1, 1)));
        shapes
    }
}

/// A configured network and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    names: Vec<String>,
    params: Vec<Tensor2>,
}

/// Glorot-uniform weights, forget-gate biases 1, other biases 0.
pub fn init_model(config: ModelConfig) -> Result<Model, NnError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let mut names = Vec::new();
    let mut params = Vec::new();
    for (name, (rows, cols)) in config.parameter_shapes() {
        let mut t = Tensor2::zeros(rows, cols);
        if name.ends_with(".b") {
            if name != "head.b" {
                let hidden = cols / 4;
                t.data_mut()[hidden..2 * hidden].fill(1.0);
            }
        } else {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            for v in t.data_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
        names.push(name);
        params.push(t);
    }
    Ok(Model {
        config,
        names,
        params,
    })
}

enum Trace {
    Lstm {
        layer: LstmTrace,
    },
    Stacked {
        layers: Vec<LstmTrace>,
        masks: Vec<Vec<Option<Tensor2>>>,
    },
    Bilstm {
        forward: LstmTrace,
        backward: LstmTrace,
    },
    Seq2seq {
        encoder: LstmTrace,
        masks: Vec<Option<Tensor2>>,
        /// Rectified, dropped-out encoder states, one `lag x H` per sample.
        memories: Vec<Tensor2>,
        decoder: LstmTrace,
        weights: Vec<Vec<f64>>,
    },
}

struct Pass {
    trace: Trace,
    head_in: Tensor2,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

/// Per-sample probabilities with the attention weights when the model has any.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub attention: Option<Vec<Vec<f64>>>,
}

fn time_major(windows: &[&Tensor2]) -> Vec<Tensor2> {
    let (steps, width) = windows[0].shape();
    (0..steps)
        .map(|t| {
            let mut x = Tensor2::zeros(windows.len(), width);
            for (b, w) in windows.iter().enumerate() {
                x.row_mut(b).copy_from_slice(w.row(t));
            }
            x
        })
        .collect()
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    /// A model with every parameter zero.
    pub fn zeros(config: ModelConfig) -> Result<Self, NnError> {
        config.validate()?;
        let (names, params) = config
            .parameter_shapes()
            .into_iter()
            .map(|(n, (r, c))| (n, Tensor2::zeros(r, c)))
            .unzip();
        Ok(Self {
            config,
            names,
            params,
        })
    }

    /// Reassembles a model from named tensors, checking names, shapes and
    /// finiteness against the configuration.
    pub fn from_parameters(config: ModelConfig, named: Vec<(String, Tensor2)>) -> Result<Self, NnError> {
        config.validate()?;
        let expected = config.parameter_shapes();
        if expected.len() != named.len() {
            return Err(NnError::Shape(format!(
                "{} expects {} parameter tensors, got {}",
                config.architecture,
                expected.len(),
                named.len()
            )));
        }
        for ((name, shape), (got_name, t)) in expected.iter().zip(&named) {
            if name != got_name || *shape != t.shape() {
                return Err(NnError::Shape(format!(
                    "expected {name} {shape:?}, got {got_name} {:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(NnError::NonFinite(format!("parameter {name}")));
            }
        }
        let (names, params) = named.into_iter().unzip();
        Ok(Self {
            config,
            names,
            params,
        })
    }

    pub fn parameters(&self) -> &[Tensor2] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Tensor2] {
        &mut self.params
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.names
    }

    pub fn named_parameters(&self) -> impl Iterator<Item = (&str, &Tensor2)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn parameter(&self, name: &str) -> Option<&Tensor2> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Tensor2::len).sum()
    }

    fn lstm_at(&self, first: usize) -> LstmParams<'_> {
        LstmParams {
            w: &self.params[first],
            u: &self.params[first + 1],
            b: &self.params[first + 2],
        }
    }

    fn head(&self) -> (&Tensor2, &Tensor2) {
        let n = self.params.len();
        (&self.params[n - 2], &self.params[n - 1])
    }

    fn check_windows(&self, windows: &[&Tensor2]) -> Result<(), NnError> {
        if windows.is_empty() {
            return Err(NnError::Shape("empty batch".into()));
        }
        let expected = (self.config.lag, self.config.input_features);
        for w in windows {
            if w.shape() != expected {
                return Err(NnError::Shape(format!(
                    "window is {}x{}, model expects {}x{} (lag x features)",
                    w.rows(),
                    w.cols(),
                    expected.0,
                    expected.1
                )));
            }
        }
        Ok(())
    }

    /// Rectifier then dropout on every step of a state sequence.
    fn regularize<R: Rng + ?Sized>(
        &self,
        states: &[Tensor2],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<Tensor2>, Vec<Option<Tensor2>>), NnError> {
        let mut outs = Vec::with_capacity(states.len());
        let mut masks = Vec::with_capacity(states.len());
        for h in states {
            let rectified = if self.config.rectifier {
                h.map(|v| v.max(0.0))
            } else {
                h.clone()
            };
            let (out, mask) = dropout(&rectified, self.config.dropout_rate, mode, rng)?;
            outs.push(out);
            masks.push(mask);
        }
        Ok((outs, masks))
    }

    fn regularize_backward(&self, raw: &Tensor2, mask: Option<&Tensor2>, upstream: &Tensor2) -> Result<Tensor2, NnError> {
        let mut d = match mask {
            Some(m) => upstream.zip_map(m, |g, k| g * k)?,
            None => upstream.clone(),
        };
        if self.config.rectifier {
            d = raw.zip_map(&d, |v, g| g * relu_slope(v))?;
        }
        Ok(d)
    }

    fn run<R: Rng + ?Sized>(&self, windows: &[&Tensor2], mode: Mode, rng: &mut R) -> Result<Pass, NnError> {
        self.check_windows(windows)?;
        let batch = windows.len();
        let xs = time_major(windows);
        let zeros = |h: usize| Tensor2::zeros(batch, h);
        let hs = &self.config.hidden_sizes;
        let (trace, head_in) = match self.config.architecture {
            Architecture::Lstm => {
                let layer = lstm_unroll(xs, zeros(hs[0]), zeros(hs[0]), self.lstm_at(0))?;
                let head_in = layer.last_hidden().clone();
                (Trace::Lstm { layer }, head_in)
            }
            Architecture::StackedLstm => {
                let mut layers = Vec::with_capacity(hs.len());
                let mut masks = Vec::with_capacity(hs.len());
                let mut input = xs;
                for (l, &h) in hs.iter().enumerate() {
                    let layer = lstm_unroll(input, zeros(h), zeros(h), self.lstm_at(3 * l))?;
                    let (outs, m) = self.regularize(layer.outputs(), mode, rng)?;
                    layers.push(layer);
                    masks.push(m);
                    input = outs;
                }
                let head_in = input.pop().expect("at least one step");
                (Trace::Stacked { layers, masks }, head_in)
            }
            Architecture::Bilstm => {
                let reversed: Vec<Tensor2> = xs.iter().rev().cloned().collect();
                let forward = lstm_unroll(xs, zeros(hs[0]), zeros(hs[0]), self.lstm_at(0))?;
                let backward = lstm_unroll(reversed, zeros(hs[0]), zeros(hs[0]), self.lstm_at(3))?;
                let head_in = forward.last_hidden().hcat(backward.last_hidden())?;
                (Trace::Bilstm { forward, backward }, head_in)
            }
            Architecture::Seq2seqAttention => {
                let encoder = lstm_unroll(xs, zeros(hs[0]), zeros(hs[0]), self.lstm_at(0))?;
                let (states, masks) = self.regularize(encoder.outputs(), mode, rng)?;
                let decoder = lstm_unroll(
                    vec![zeros(DECODER_INPUT_WIDTH)],
                    encoder.last_hidden().clone(),
                    encoder.last_cell().clone(),
                    self.lstm_at(3),
                )?;
                let query = decoder.last_hidden();
                let mut head_in = Tensor2::zeros(batch, hs[0] + hs[1]);
                let mut memories = Vec::with_capacity(batch);
                let mut weights = Vec::with_capacity(batch);
                for b in 0..batch {
                    let mut memory = Tensor2::zeros(states.len(), hs[0]);
                    for (t, s) in states.iter().enumerate() {
                        memory.row_mut(t).copy_from_slice(s.row(b));
                    }
                    let attended = attention(query.row(b), &memory)?;
                    let row = head_in.row_mut(b);
                    row[..hs[1]].copy_from_slice(query.row(b));
                    row[hs[1]..].copy_from_slice(&attended.context);
                    memories.push(memory);
                    weights.push(attended.weights);
                }
                (
                    Trace::Seq2seq {
                        encoder,
                        masks,
                        memories,
                        decoder,
                        weights,
                    },
                    head_in,
                )
            }
        };
        let (hw, hb) = self.head();
        let logits = affine(&head_in, hw, hb)?.into_data();
        let probs = logits.iter().map(|&z| sigmoid(z)).collect();
        Ok(Pass {
            trace,
            head_in,
            logits,
            probs,
        })
    }

    /// Parameter gradients given `∂loss/∂logit` per sample.
    fn backprop(&self, pass: &Pass, dlogits: &Tensor2) -> Result<Vec<Tensor2>, NnError> {
        let n = self.params.len();
        let mut grads: Vec<Tensor2> = self.params.iter().map(|p| Tensor2::zeros(p.rows(), p.cols())).collect();
        let (hw, _) = self.head();
        let head = affine_backward(&pass.head_in, hw, dlogits)?;
        grads[n - 2] = head.dw;
        grads[n - 1] = head.db;
        let batch = dlogits.rows();
        let put = |grads: &mut Vec<Tensor2>, first: usize, g: LstmGrads| {
            grads[first] = g.w;
            grads[first + 1] = g.u;
            grads[first + 2] = g.b;
        };
        let last_only = |steps: usize, d: Tensor2| {
            let mut dhs = vec![Tensor2::zeros(d.rows(), d.cols()); steps];
            dhs[steps - 1] = d;
            dhs
        };
        match &pass.trace {
            Trace::Lstm { layer } => {
                let dhs = last_only(layer.outputs().len(), head.dx);
                let back = lstm_backward(layer, self.lstm_at(0), &dhs, None)?;
                put(&mut grads, 0, back.grads);
            }
            Trace::Stacked { layers, masks } => {
                let steps = layers[0].outputs().len();
                let mut d_outs = last_only(steps, head.dx);
                for l in (0..layers.len()).rev() {
                    let dhs = layers[l]
                        .outputs()
                        .iter()
                        .zip(&masks[l])
                        .zip(&d_outs)
                        .map(|((raw, mask), d)| self.regularize_backward(raw, mask.as_ref(), d))
                        .collect::<Result<Vec<_>, _>>()?;
                    let back = lstm_backward(&layers[l], self.lstm_at(3 * l), &dhs, None)?;
                    put(&mut grads, 3 * l, back.grads);
                    d_outs = back.dxs;
                }
            }
            Trace::Bilstm { forward, backward } => {
                let hid = self.config.hidden_sizes[0];
                let (df, db) = head.dx.hsplit(hid);
                let steps = forward.outputs().len();
                let back_f = lstm_backward(forward, self.lstm_at(0), &last_only(steps, df), None)?;
                let back_b = lstm_backward(backward, self.lstm_at(3), &last_only(steps, db), None)?;
                put(&mut grads, 0, back_f.grads);
                put(&mut grads, 3, back_b.grads);
            }
            Trace::Seq2seq {
                encoder,
                masks,
                memories,
                decoder,
                weights,
            } => {
                let hid = self.config.hidden_sizes[1];
                let (mut d_query, d_context) = head.dx.hsplit(hid);
                let query = decoder.last_hidden();
                let steps = encoder.outputs().len();
                let mut d_states = vec![Tensor2::zeros(batch, self.config.hidden_sizes[0]); steps];
                for b in 0..batch {
                    let (dq, dmem) = attention_backward(query.row(b), &memories[b], &weights[b], d_context.row(b))?;
                    for (acc, v) in d_query.row_mut(b).iter_mut().zip(&dq) {
                        *acc += v;
                    }
                    for (t, ds) in d_states.iter_mut().enumerate() {
                        ds.row_mut(b).copy_from_slice(dmem.row(t));
                    }
                }
                let dec = lstm_backward(decoder, self.lstm_at(3), &[d_query], None)?;
                put(&mut grads, 3, dec.grads);
                let mut dhs = encoder
                    .outputs()
                    .iter()
                    .zip(masks)
                    .zip(&d_states)
                    .map(|((raw, mask), d)| self.regularize_backward(raw, mask.as_ref(), d))
                    .collect::<Result<Vec<_>, _>>()?;
                dhs[steps - 1].add_assign(&dec.dh0)?;
                let enc = lstm_backward(encoder, self.lstm_at(0), &dhs, Some(&dec.dc0))?;
                put(&mut grads, 0, enc.grads);
            }
        }
        Ok(grads)
    }

    /// Surge probability for one window. `seed` drives dropout in train
    /// mode and is ignored in eval mode.
    pub fn forward(&self, window: &Tensor2, mode: Mode, seed: u64) -> Result<f64, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self.run(&[window], mode, &mut rng)?.probs[0])
    }

    /// Eval-mode probabilities (and attention weights) for a batch.
    pub fn predict(&self, windows: &[&Tensor2]) -> Result<Prediction, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = self.run(windows, Mode::Eval, &mut rng)?;
        let attention = match pass.trace {
            Trace::Seq2seq { weights, .. } => Some(weights),
            _ => None,
        };
        Ok(Prediction {
            probabilities: pass.probs,
            attention,
        })
    }

    /// Eval-mode pre-sigmoid outputs.
    pub fn logits(&self, windows: &[&Tensor2]) -> Result<Vec<f64>, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.run(windows, Mode::Eval, &mut rng)?.logits)
    }

    pub fn predict_proba(&self, windows: &[&Tensor2]) -> Result<Vec<f64>, NnError> {
        Ok(self.predict(windows)?.probabilities)
    }

    /// Mean binary cross-entropy over the batch and its gradient for every
    /// parameter, averaged over samples.
    pub fn loss_and_gradients<R: Rng + ?Sized>(
        &self,
        windows: &[&Tensor2],
        labels: &[f64],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(f64, Vec<Tensor2>), NnError> {
        if labels.len() != windows.len() {
            return Err(NnError::Shape(format!(
                "{} windows but {} labels",
                windows.len(),
                labels.len()
            )));
        }
        let pass = self.run(windows, mode, rng)?;
        let batch = windows.len() as f64;
        let mut loss = 0.0;
        let mut dlogits = Tensor2::zeros(windows.len(), 1);
        for (b, (&p, &y)) in pass.probs.iter().zip(labels).enumerate() {
            loss += bce_loss(p, y);
            dlogits.set(b, 0, bce_grad(p, y) * p * (1.0 - p) / batch);
        }
        let grads = self.backprop(&pass, &dlogits)?;
        Ok((loss / batch, grads))
    }

    /// Eval-mode mean loss.
    pub fn loss(&self, windows: &[&Tensor2], labels: &[f64]) -> Result<f64, NnError> {
        let probs = self.predict_proba(windows)?;
        Ok(probs.iter().zip(labels).map(|(&p, &y)| bce_loss(p, y)).sum::<f64>() / probs.len() as f64)
    }
}

/// Eval-mode loss of one labeled window, for [`crate::nncore::grad_check`].
pub struct WindowObjective<'a> {
    pub model: &'a mut Model,
    pub window: &'a Tensor2,
    pub label: f64,
}

impl Objective for WindowObjective<'_> {
    fn parameters_mut(&mut self) -> &mut [Tensor2] {
        self.model.parameters_mut()
    }

    fn loss(&mut self) -> Result<f64, NnError> {
        self.model.loss(&[self.window], &[self.label])
    }

    fn loss_and_gradients(&mut self) -> Result<(f64, Vec<Tensor2>), NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.model
            .loss_and_gradients(&[self.window], &[self.label], Mode::Eval, &mut rng)
    }

    /// With `L(z) = softplus(z) − y·z` on the logit `z`,
    /// `L(z⁺) − L(z⁻) = ln1p(σ(z⁻)·expm1(z⁺ − z⁻)) − y·(z⁺ − z⁻)`, which avoids
    /// cancelling two losses near ln 2. Falls back to plain subtraction when
    /// the probability clamp could be active.
    fn loss_difference(&mut self, param: usize, entry: usize, step: f64) -> Result<f64, NnError> {
        let original = self.model.params[param].data()[entry];
        self.model.params[param].data_mut()[entry] = original + step;
        let plus = self.model.logits(&[self.window]);
        self.model.params[param].data_mut()[entry] = original - step;
        let minus = self.model.logits(&[self.window]);
        self.model.params[param].data_mut()[entry] = original;
        let (zp, zm) = (plus?[0], minus?[0]);
        if !zp.is_finite() || !zm.is_finite() {
            return Err(NnError::NonFinite(format!(
                "logit became non-finite perturbing {} entry {entry}",
                self.model.names[param]
            )));
        }
        const SAFE_LOGIT: f64 = 25.0;
        if zp.abs() < SAFE_LOGIT && zm.abs() < SAFE_LOGIT {
            let dz = zp - zm;
            Ok((sigmoid(zm) * dz.exp_m1()).ln_1p() - self.label * dz)
        } else {
            let loss = |z: f64| bce_loss(sigmoid(z), self.label);
            Ok(loss(zp) - loss(zm))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::grad_check;

    fn random_window(lag: usize, f: usize, seed: u64) -> Tensor2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor2::from_vec(lag, f, (0..lag * f).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
    }

    #[test]
    fn architecture_names_round_trip() {
        for a in Architecture::ALL {
            assert_eq!(a.as_str().parse::<Architecture>().unwrap(), a);
        }
        assert!("gru".parse::<Architecture>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::new(Architecture::StackedLstm, 3);
        assert!(c.validate().is_ok());
        c.hidden_sizes = vec![4, 4];
        assert!(c.validate().is_err());
        let mut c = ModelConfig::new(Architecture::Seq2seqAttention, 3);
        c.hidden_sizes = vec![8, 4];
        assert!(c.validate().is_err());
        let mut c = ModelConfig::new(Architecture::Lstm, 3);
        c.dropout_rate = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn default_shapes() {
        let shapes = ModelConfig::new(Architecture::StackedLstm, 20).parameter_shapes();
        let get = |n: &str| shapes.iter().find(|(name, _)| name == n).unwrap().1;
        assert_eq!(get("lstm0.w"), (20, 512));
        assert_eq!(get("lstm1.u"), (64, 256));
        assert_eq!(get("lstm2.b"), (1, 128));
        assert_eq!(get("head.w"), (32, 1));
        let shapes = ModelConfig::new(Architecture::Seq2seqAttention, 20).parameter_shapes();
        assert_eq!(shapes.last().unwrap().1, (1, 1));
        assert_eq!(shapes[shapes.len() - 2].1, (128, 1));
    }

    #[test]
    fn init_is_deterministic_and_biases_follow_the_gate_layout() {
        for arch in Architecture::ALL {
            let cfg = ModelConfig::tiny(arch, 5, 4, 3).with_seed(9);
            let a = init_model(cfg.clone()).unwrap();
            let b = init_model(cfg).unwrap();
            assert_eq!(a, b);
            for (name, t) in a.named_parameters() {
                if name == "head.b" {
                    assert_eq!(t.data(), &[0.0]);
                } else if name.ends_with(".b") {
                    let d = t.data();
                    assert!(d[..5].iter().all(|&v| v == 0.0));
                    assert!(d[5..10].iter().all(|&v| v == 1.0));
                    assert!(d[10..].iter().all(|&v| v == 0.0));
                } else {
                    let bound = (6.0 / (t.rows() + t.cols()) as f64).sqrt();
                    assert!(t.data().iter().all(|v| v.abs() <= bound));
                }
            }
        }
    }

    #[test]
    fn init_weights_are_centered() {
        let mut sum = 0.0;
        let mut n = 0usize;
        let mut bound = 0.0;
        for seed in 0..100 {
            let m = init_model(ModelConfig::tiny(Architecture::Lstm, 8, 4, 6).with_seed(seed)).unwrap();
            let w = m.parameter("lstm.w").unwrap();
            bound = (6.0 / (w.rows() + w.cols()) as f64).sqrt();
            sum += w.data().iter().sum::<f64>();
            n += w.len();
        }
        let mean = sum / n as f64;
        let standard_error = bound / 3f64.sqrt() / (n as f64).sqrt();
        assert!(mean.abs() < 3.0 * standard_error, "mean {mean}, se {standard_error}");
    }

    #[test]
    fn zero_parameters_give_one_half() {
        for arch in Architecture::ALL {
            let m = Model::zeros(ModelConfig::tiny(arch, 4, 5, 3)).unwrap();
            let w = random_window(5, 3, 1);
            assert_eq!(m.forward(&w, Mode::Eval, 0).unwrap(), 0.5);
        }
    }

    #[test]
    fn window_shape_is_checked() {
        let m = init_model(ModelConfig::tiny(Architecture::Lstm, 4, 5, 3)).unwrap();
        let err = m.forward(&Tensor2::zeros(5, 4), Mode::Eval, 0).unwrap_err();
        assert!(matches!(err, NnError::Shape(ref s) if s.contains("5x4")));
    }

    #[test]
    fn bilstm_is_a_concatenation_of_two_passes() {
        let m = init_model(ModelConfig::tiny(Architecture::Bilstm, 4, 6, 3).with_seed(3)).unwrap();
        let w = random_window(6, 3, 2);
        let p = m.parameters();
        let fwd = lstm_layer_forward(&w, LstmParams { w: &p[0], u: &p[1], b: &p[2] }).unwrap();
        let bwd = lstm_layer_forward(&w.reversed_rows(), LstmParams { w: &p[3], u: &p[4], b: &p[5] }).unwrap();
        let feat = Tensor2::row_vector(fwd.row(5)).hcat(&Tensor2::row_vector(bwd.row(5))).unwrap();
        let expected = sigmoid(affine(&feat, &p[6], &p[7]).unwrap().get(0, 0));
        let got = m.forward(&w, Mode::Eval, 0).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn attention_weights_are_a_distribution() {
        let m = init_model(ModelConfig::tiny(Architecture::Seq2seqAttention, 4, 6, 3).with_seed(5)).unwrap();
        let windows: Vec<Tensor2> = (0..4).map(|s| random_window(6, 3, s)).collect();
        let refs: Vec<&Tensor2> = windows.iter().collect();
        let pred = m.predict(&refs).unwrap();
        for w in pred.attention.unwrap() {
            assert_eq!(w.len(), 6);
            assert!(w.iter().all(|&a| a >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_mode_ignores_the_seed_and_train_mode_uses_it() {
        let m = init_model(ModelConfig::tiny(Architecture::StackedLstm, 6, 5, 3).with_seed(1)).unwrap();
        let w = random_window(5, 3, 4);
        let base = m.forward(&w, Mode::Eval, 0).unwrap();
        for seed in 1..10 {
            assert_eq!(m.forward(&w, Mode::Eval, seed).unwrap().to_bits(), base.to_bits());
        }
        let t1 = m.forward(&w, Mode::Train, 1).unwrap();
        assert_eq!(t1, m.forward(&w, Mode::Train, 1).unwrap());
        let differs = (2..10).any(|s| m.forward(&w, Mode::Train, s).unwrap() != t1);
        assert!(differs);
    }

    #[test]
    fn batched_prediction_matches_single_windows() {
        for arch in Architecture::ALL {
            let m = init_model(ModelConfig::tiny(arch, 4, 5, 3).with_seed(2)).unwrap();
            let windows: Vec<Tensor2> = (0..3).map(|s| random_window(5, 3, 10 + s)).collect();
            let refs: Vec<&Tensor2> = windows.iter().collect();
            let batch = m.predict_proba(&refs).unwrap();
            for (w, p) in windows.iter().zip(batch) {
                assert!((m.forward(w, Mode::Eval, 0).unwrap() - p).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gradients_pass_finite_difference_check() {
        for arch in Architecture::ALL {
            for seed in 0..3 {
                let mut m = init_model(ModelConfig::tiny(arch, 4, 5, 3).with_seed(seed)).unwrap();
                let w = random_window(5, 3, 100 + seed);
                let mut obj = WindowObjective {
                    model: &mut m,
                    window: &w,
                    label: (seed % 2) as f64,
                };
                let report = grad_check(&mut obj, 1e-5).unwrap();
                assert!(report.max_relative_error < 1e-4, "{arch} seed {seed}: {report:?}");
            }
        }
    }

    #[test]
    fn logit_difference_agrees_with_subtracted_losses() {
        for arch in Architecture::ALL {
            let mut m = init_model(ModelConfig::tiny(arch, 4, 5, 3).with_seed(2)).unwrap();
            let w = random_window(5, 3, 9);
            let step = 1e-3;
            for label in [0.0, 1.0] {
                for pi in 0..m.params.len() {
                    let before = m.params[pi].clone();
                    let plus_minus = |m: &mut Model, delta: f64| {
                        m.params[pi].data_mut()[0] += delta;
                        let l = m.loss(&[&w], &[label]).unwrap();
                        m.params[pi].data_mut()[0] -= delta;
                        l
                    };
                    let expected = plus_minus(&mut m, step) - plus_minus(&mut m, -step);
                    let got = WindowObjective {
                        model: &mut m,
                        window: &w,
                        label,
                    }
                    .loss_difference(pi, 0, step)
                    .unwrap();
                    assert!((got - expected).abs() < 1e-14, "{arch} {pi}: {got:e} vs {expected:e}");
                    assert_eq!(m.params[pi], before);
                }
            }
        }
    }

    #[test]
    fn stacked_without_rectifier_or_dropout_still_checks() {
        let mut cfg = ModelConfig::tiny(Architecture::StackedLstm, 4, 5, 3).with_seed(8);
        cfg.dropout_rate = 0.0;
        cfg.rectifier = false;
        let mut m = init_model(cfg).unwrap();
        let w = random_window(5, 3, 8);
        let report = grad_check(
            &mut WindowObjective {
                model: &mut m,
                window: &w,
                label: 1.0,
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    /// Batch-averaged gradients equal the mean of single-sample gradients,
    /// including train-mode dropout when masks are drawn in the same order.
    #[test]
    fn batch_gradient_is_the_sample_mean() {
        let m = init_model(ModelConfig::tiny(Architecture::Seq2seqAttention, 4, 5, 3).with_seed(4)).unwrap();
        let windows: Vec<Tensor2> = (0..3).map(|s| random_window(5, 3, 40 + s)).collect();
        let refs: Vec<&Tensor2> = windows.iter().collect();
        let labels = [1.0, 0.0, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (loss, grads) = m.loss_and_gradients(&refs, &labels, Mode::Eval, &mut rng).unwrap();
        let mut mean_loss = 0.0;
        let mut mean: Vec<Tensor2> = grads.iter().map(|g| Tensor2::zeros(g.rows(), g.cols())).collect();
        for (w, &y) in windows.iter().zip(&labels) {
            let (l, g) = m.loss_and_gradients(&[w], &[y], Mode::Eval, &mut rng).unwrap();
            mean_loss += l / 3.0;
            for (acc, gi) in mean.iter_mut().zip(g) {
                acc.add_assign(&gi.map(|v| v / 3.0)).unwrap();
            }
        }
        assert!((loss - mean_loss).abs() < 1e-12);
        for (a, b) in grads.iter().zip(&mean) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn from_parameters_validates() {
        let cfg = ModelConfig::tiny(Architecture::Bilstm, 3, 4, 2);
        let m = init_model(cfg.clone()).unwrap();
        let named: Vec<(String, Tensor2)> = m.named_parameters().map(|(n, t)| (n.to_string(), t.clone())).collect();
        assert_eq!(Model::from_parameters(cfg.clone(), named.clone()).unwrap(), m);
        let mut bad = named.clone();
        bad[0].1 = Tensor2::zeros(1, 1);
        assert!(Model::from_parameters(cfg.clone(), bad).is_err());
        let mut nan = named;
        nan[1].1.data_mut()[0] = f64::NAN;
        assert!(matches!(Model::from_parameters(cfg, nan), Err(NnError::NonFinite(_))));
    }
}
