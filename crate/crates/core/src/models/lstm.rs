//! LSTM cell and layer with backpropagation through time.
//!
//! Gate pre-activations are packed column-wise as `[i | f | g | o]`, each
//! `H` wide: `z = x·W + h·U + b` with `W: in x 4H`, `U: H x 4H`, `b: 1 x 4H`.
//! All functions operate on a batch: every row of `x`, `h` and `c` is an
//! independent sequence.

use crate::nncore::{matmul_acc, matmul_tn_acc, sigmoid, NnError, Tensor2};

/// Borrowed weights of one LSTM layer.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams<'a> {
    pub w: &'a Tensor2,
    pub u: &'a Tensor2,
    pub b: &'a Tensor2,
}

impl LstmParams<'_> {
    pub fn hidden(&self) -> usize {
        self.u.rows()
    }

    pub fn input(&self) -> usize {
        self.w.rows()
    }

    fn validate(&self) -> Result<(), NnError> {
        let h = self.hidden();
        if self.u.cols() != 4 * h || self.w.cols() != 4 * h || self.b.shape() != (1, 4 * h) {
            return Err(NnError::Shape(format!(
                "lstm weights W {:?}, U {:?}, b {:?} are inconsistent",
                self.w.shape(),
                self.u.shape(),
                self.b.shape()
            )));
        }
        Ok(())
    }
}

/// Gradients for one layer, shaped like [`LstmParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub w: Tensor2,
    pub u: Tensor2,
    pub b: Tensor2,
}

impl LstmGrads {
    fn zeros_like(p: &LstmParams<'_>) -> Self {
        Self {
            w: Tensor2::zeros(p.w.rows(), p.w.cols()),
            u: Tensor2::zeros(p.u.rows(), p.u.cols()),
            b: Tensor2::zeros(1, p.b.cols()),
        }
    }
}

/// Activated gates `[i | f | g | o]` for one step.
fn gates(x: &Tensor2, h: &Tensor2, p: &LstmParams<'_>) -> Tensor2 {
    let hid = p.hidden();
    let mut z = Tensor2::zeros(x.rows(), 4 * hid);
    for r in 0..z.rows() {
        z.row_mut(r).copy_from_slice(p.b.data());
    }
    matmul_acc(x, p.w, &mut z);
    matmul_acc(h, p.u, &mut z);
    for r in 0..z.rows() {
        let row = z.row_mut(r);
        for v in &mut row[..2 * hid] {
            *v = sigmoid(*v);
        }
        for v in &mut row[2 * hid..3 * hid] {
            *v = v.tanh();
        }
        for v in &mut row[3 * hid..] {
            *v = sigmoid(*v);
        }
    }
    z
}

fn step(x: &Tensor2, h: &Tensor2, c: &Tensor2, p: &LstmParams<'_>) -> (Tensor2, Tensor2, Tensor2) {
    let hid = p.hidden();
    let act = gates(x, h, p);
    let mut c_next = Tensor2::zeros(x.rows(), hid);
    let mut h_next = Tensor2::zeros(x.rows(), hid);
    for r in 0..x.rows() {
        let a = act.row(r);
        let (i, f, g, o) = (&a[..hid], &a[hid..2 * hid], &a[2 * hid..3 * hid], &a[3 * hid..]);
        let c_prev = c.row(r);
        let cn = c_next.row_mut(r);
        for j in 0..hid {
            cn[j] = f[j] * c_prev[j] + i[j] * g[j];
        }
        let hn = h_next.row_mut(r);
        for j in 0..hid {
            hn[j] = o[j] * cn[j].tanh();
        }
    }
    (h_next, c_next, act)
}

fn check_step_shapes(x: &Tensor2, h: &Tensor2, c: &Tensor2, p: &LstmParams<'_>) -> Result<(), NnError> {
    p.validate()?;
    let hid = p.hidden();
    if x.cols() != p.input() || h.shape() != (x.rows(), hid) || c.shape() != (x.rows(), hid) {
        return Err(NnError::Shape(format!(
            "lstm step: x {:?}, h {:?}, c {:?} against W {:?}",
            x.shape(),
            h.shape(),
            c.shape(),
            p.w.shape()
        )));
    }
    Ok(())
}

/// One cell step: returns `(h′, c′)`.
pub fn lstm_cell_forward(
    x: &Tensor2,
    h: &Tensor2,
    c: &Tensor2,
    params: LstmParams<'_>,
) -> Result<(Tensor2, Tensor2), NnError> {
    check_step_shapes(x, h, c, &params)?;
    let (h_next, c_next, _) = step(x, h, c, &params);
    Ok((h_next, c_next))
}

/// Everything the backward pass needs from a forward unroll.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    xs: Vec<Tensor2>,
    /// `hs[0]` is the initial state; `hs[t + 1]` the output of step `t`.
    hs: Vec<Tensor2>,
    cs: Vec<Tensor2>,
    acts: Vec<Tensor2>,
}

impl LstmTrace {
    /// Hidden state after every step.
    pub fn outputs(&self) -> &[Tensor2] {
        &self.hs[1..]
    }

    pub fn last_hidden(&self) -> &Tensor2 {
        self.hs.last().expect("trace holds the initial state")
    }

    pub fn last_cell(&self) -> &Tensor2 {
        self.cs.last().expect("trace holds the initial state")
    }
}

/// Unrolls the layer over `xs` (one `B x in` tensor per time step).
pub fn lstm_unroll(
    xs: Vec<Tensor2>,
    h0: Tensor2,
    c0: Tensor2,
    params: LstmParams<'_>,
) -> Result<LstmTrace, NnError> {
    if xs.is_empty() {
        return Err(NnError::Shape("lstm layer needs at least one time step".into()));
    }
    for x in &xs {
        check_step_shapes(x, &h0, &c0, &params)?;
    }
    let mut trace = LstmTrace {
        hs: Vec::with_capacity(xs.len() + 1),
        cs: Vec::with_capacity(xs.len() + 1),
        acts: Vec::with_capacity(xs.len()),
        xs: Vec::new(),
    };
    trace.hs.push(h0);
    trace.cs.push(c0);
    for x in &xs {
        let (h, c, act) = step(x, trace.last_hidden(), trace.last_cell(), &params);
        trace.hs.push(h);
        trace.cs.push(c);
        trace.acts.push(act);
    }
    trace.xs = xs;
    Ok(trace)
}

/// Gradients of an unrolled layer.
#[derive(Debug, Clone)]
pub struct LstmBackward {
    pub grads: LstmGrads,
    /// One `B x in` tensor per step.
    pub dxs: Vec<Tensor2>,
    pub dh0: Tensor2,
    pub dc0: Tensor2,
}

/// Backpropagation through time.
///
/// `dhs[t]` is the loss gradient flowing into the output of step `t`;
/// `dc_last`, when given, is an extra gradient on the final cell state.
pub fn lstm_backward(
    trace: &LstmTrace,
    params: LstmParams<'_>,
    dhs: &[Tensor2],
    dc_last: Option<&Tensor2>,
) -> Result<LstmBackward, NnError> {
    let steps = trace.xs.len();
    if dhs.len() != steps {
        return Err(NnError::Shape(format!(
            "expected {steps} output gradients, got {}",
            dhs.len()
        )));
    }
    let batch = trace.hs[0].rows();
    let hid = params.hidden();
    let mut grads = LstmGrads::zeros_like(&params);
    let mut dxs = vec![Tensor2::zeros(0, 0); steps];
    let mut dh_next = Tensor2::zeros(batch, hid);
    let mut dc_next = match dc_last {
        Some(dc) => dc.clone(),
        None => Tensor2::zeros(batch, hid),
    };
    let mut dz = Tensor2::zeros(batch, 4 * hid);
    for t in (0..steps).rev() {
        let act = &trace.acts[t];
        let c_prev = &trace.cs[t];
        let c = &trace.cs[t + 1];
        let dh_out = &dhs[t];
        for r in 0..batch {
            let a = act.row(r);
            let (i, f, g, o) = (&a[..hid], &a[hid..2 * hid], &a[2 * hid..3 * hid], &a[3 * hid..]);
            let cp = c_prev.row(r);
            let cr = c.row(r);
            let dhr = dh_out.row(r);
            let dhn = dh_next.row(r);
            let dz_row = dz.row_mut(r);
            let dcn = dc_next.row_mut(r);
            for j in 0..hid {
                let dh = dhr[j] + dhn[j];
                let tc = cr[j].tanh();
                let dc = dcn[j] + dh * o[j] * (1.0 - tc * tc);
                dz_row[j] = dc * g[j] * i[j] * (1.0 - i[j]);
                dz_row[hid + j] = dc * cp[j] * f[j] * (1.0 - f[j]);
                dz_row[2 * hid + j] = dc * i[j] * (1.0 - g[j] * g[j]);
                dz_row[3 * hid + j] = dh * tc * o[j] * (1.0 - o[j]);
                dcn[j] = dc * f[j];
            }
        }
        matmul_tn_acc(&trace.xs[t], &dz, &mut grads.w);
        matmul_tn_acc(&trace.hs[t], &dz, &mut grads.u);
        grads.b.add_assign(&dz.sum_rows())?;
        dxs[t] = dz.matmul_nt(params.w)?;
        dh_next = dz.matmul_nt(params.u)?;
    }
    Ok(LstmBackward {
        grads,
        dxs,
        dh0: dh_next,
        dc0: dc_next,
    })
}

/// Hidden states (`lag x H`) of a single window unrolled from a zero state.
pub fn lstm_layer_forward(window: &Tensor2, params: LstmParams<'_>) -> Result<Tensor2, NnError> {
    let hid = params.hidden();
    let xs = (0..window.rows())
        .map(|t| Tensor2::row_vector(window.row(t)))
        .collect();
    let trace = lstm_unroll(xs, Tensor2::zeros(1, hid), Tensor2::zeros(1, hid), params)?;
    let mut out = Tensor2::zeros(window.rows(), hid);
    for (t, h) in trace.outputs().iter().enumerate() {
        out.row_mut(t).copy_from_slice(h.data());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::relative_error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng, scale: f64) -> Tensor2 {
        let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
        Tensor2::from_vec(rows, cols, data).unwrap()
    }

    struct Weights {
        w: Tensor2,
        u: Tensor2,
        b: Tensor2,
    }

    impl Weights {
        fn random(input: usize, hid: usize, rng: &mut ChaCha8Rng) -> Self {
            Self {
                w: random(input, 4 * hid, rng, 0.8),
                u: random(hid, 4 * hid, rng, 0.8),
                b: random(1, 4 * hid, rng, 0.5),
            }
        }
        fn params(&self) -> LstmParams<'_> {
            LstmParams {
                w: &self.w,
                u: &self.u,
                b: &self.b,
            }
        }
    }

    fn entry(wt: &mut Weights, which: usize, e: usize) -> &mut f64 {
        match which {
            0 => &mut wt.w.data_mut()[e],
            1 => &mut wt.u.data_mut()[e],
            _ => &mut wt.b.data_mut()[e],
        }
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Scalar-by-scalar re-implementation of the gate equations.
    fn naive_layer(window: &Tensor2, wt: &Weights) -> Vec<Vec<f64>> {
        let hid = wt.u.rows();
        let mut h = vec![0.0; hid];
        let mut c = vec![0.0; hid];
        let mut out = Vec::new();
        for t in 0..window.rows() {
            let pre = |gate: usize, j: usize| {
                let col = gate * hid + j;
                let mut z = wt.b.get(0, col);
                for k in 0..window.cols() {
                    z += window.get(t, k) * wt.w.get(k, col);
                }
                for (k, hk) in h.iter().enumerate() {
                    z += hk * wt.u.get(k, col);
                }
                z
            };
            let mut hn = vec![0.0; hid];
            let mut cn = vec![0.0; hid];
            for j in 0..hid {
                let i = sig(pre(0, j));
                let f = sig(pre(1, j));
                let g = pre(2, j).tanh();
                let o = sig(pre(3, j));
                cn[j] = f * c[j] + i * g;
                hn[j] = o * cn[j].tanh();
            }
            h = hn;
            c = cn;
            out.push(h.clone());
        }
        out
    }

    #[test]
    fn zero_weights_are_a_fixed_point() {
        let hid = 3;
        let (w, u, b) = (Tensor2::zeros(2, 12), Tensor2::zeros(3, 12), Tensor2::zeros(1, 12));
        let p = LstmParams { w: &w, u: &u, b: &b };
        let x = Tensor2::from_vec(1, 2, vec![4.0, -7.0]).unwrap();
        let (h, c) = lstm_cell_forward(&x, &Tensor2::zeros(1, hid), &Tensor2::zeros(1, hid), p).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
        assert!(c.data().iter().all(|&v| v == 0.0));
        let window = Tensor2::filled(6, 2, 3.0);
        let states = lstm_layer_forward(&window, p).unwrap();
        assert!(states.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_cell_with_unit_weights() {
        let (w, u, b) = (Tensor2::filled(1, 4, 1.0), Tensor2::filled(1, 4, 1.0), Tensor2::zeros(1, 4));
        let p = LstmParams { w: &w, u: &u, b: &b };
        let one = Tensor2::filled(1, 1, 1.0);
        let (h, c) = lstm_cell_forward(&one, &Tensor2::zeros(1, 1), &Tensor2::zeros(1, 1), p).unwrap();
        assert!((c.get(0, 0) - 0.5568).abs() < 1e-3, "{c:?}");
        assert!((h.get(0, 0) - 0.3696).abs() < 1e-3, "{h:?}");
    }

    #[test]
    fn layer_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let wt = Weights::random(3, 4, &mut rng);
            let window = random(6, 3, &mut rng, 2.0);
            let fast = lstm_layer_forward(&window, wt.params()).unwrap();
            let slow = naive_layer(&window, &wt);
            for (t, row) in slow.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    assert!((fast.get(t, j) - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_step_layer_equals_one_cell_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let wt = Weights::random(3, 2, &mut rng);
        let window = random(1, 3, &mut rng, 1.0);
        let states = lstm_layer_forward(&window, wt.params()).unwrap();
        let (h, _) = lstm_cell_forward(&window, &Tensor2::zeros(1, 2), &Tensor2::zeros(1, 2), wt.params()).unwrap();
        assert_eq!(states.row(0), h.data());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let wt = Weights::random(3, 2, &mut rng);
        assert!(matches!(
            lstm_layer_forward(&Tensor2::zeros(4, 5), wt.params()),
            Err(NnError::Shape(_))
        ));
    }

    /// Loss `Σ_t Σ_j dhs[t]·h_t + dc·c_T` for a batch of two sequences.
    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (input, hid, steps, batch) = (3, 4, 5, 2);
        let mut wt = Weights::random(input, hid, &mut rng);
        let xs: Vec<Tensor2> = (0..steps).map(|_| random(batch, input, &mut rng, 1.5)).collect();
        let h0 = random(batch, hid, &mut rng, 0.5);
        let c0 = random(batch, hid, &mut rng, 0.5);
        let dhs: Vec<Tensor2> = (0..steps).map(|_| random(batch, hid, &mut rng, 1.0)).collect();
        let dc_last = random(batch, hid, &mut rng, 1.0);

        let objective = |wt: &Weights, xs: &[Tensor2], h0: &Tensor2, c0: &Tensor2| -> f64 {
            let trace = lstm_unroll(xs.to_vec(), h0.clone(), c0.clone(), wt.params()).unwrap();
            let mut total = 0.0;
            for (h, g) in trace.outputs().iter().zip(&dhs) {
                total += h.data().iter().zip(g.data()).map(|(a, b)| a * b).sum::<f64>();
            }
            total + trace.last_cell().data().iter().zip(dc_last.data()).map(|(a, b)| a * b).sum::<f64>()
        };

        let trace = lstm_unroll(xs.clone(), h0.clone(), c0.clone(), wt.params()).unwrap();
        let back = lstm_backward(&trace, wt.params(), &dhs, Some(&dc_last)).unwrap();
        let step = 1e-5;
        let mut worst = 0.0f64;

        for which in 0..3 {
            let analytic = [&back.grads.w, &back.grads.u, &back.grads.b][which].clone();
            for e in 0..analytic.len() {
                let orig = *entry(&mut wt, which, e);
                *entry(&mut wt, which, e) = orig + step;
                let plus = objective(&wt, &xs, &h0, &c0);
                *entry(&mut wt, which, e) = orig - step;
                let minus = objective(&wt, &xs, &h0, &c0);
                *entry(&mut wt, which, e) = orig;
                worst = worst.max(relative_error(analytic.data()[e], (plus - minus) / (2.0 * step)));
            }
        }
        // inputs and initial states
        for t in 0..steps {
            for e in 0..batch * input {
                let mut xp = xs.clone();
                xp[t].data_mut()[e] += step;
                let mut xm = xs.clone();
                xm[t].data_mut()[e] -= step;
                let n = (objective(&wt, &xp, &h0, &c0) - objective(&wt, &xm, &h0, &c0)) / (2.0 * step);
                worst = worst.max(relative_error(back.dxs[t].data()[e], n));
            }
        }
        for e in 0..batch * hid {
            let (mut hp, mut hm) = (h0.clone(), h0.clone());
            hp.data_mut()[e] += step;
            hm.data_mut()[e] -= step;
            let n = (objective(&wt, &xs, &hp, &c0) - objective(&wt, &xs, &hm, &c0)) / (2.0 * step);
            worst = worst.max(relative_error(back.dh0.data()[e], n));
            let (mut cp, mut cm) = (c0.clone(), c0.clone());
            cp.data_mut()[e] += step;
            cm.data_mut()[e] -= step;
            let n = (objective(&wt, &xs, &h0, &cp) - objective(&wt, &xs, &h0, &cm)) / (2.0 * step);
            worst = worst.max(relative_error(back.dc0.data()[e], n));
        }
        assert!(worst < 1e-6, "max relative error {worst}");
    }
}
