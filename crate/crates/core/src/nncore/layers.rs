use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{matmul_acc, NnError, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// `y = x·W + b`, with `b` broadcast over the rows of `x`.
pub fn affine(x: &Tensor2, w: &Tensor2, b: &Tensor2) -> Result<Tensor2, NnError> {
    if x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols() {
        return Err(NnError::Shape(format!(
            "affine: x is {}x{}, W is {}x{}, b is {}x{}",
            x.rows(),
            x.cols(),
            w.rows(),
            w.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let mut y = Tensor2::zeros(x.rows(), w.cols());
    for r in 0..y.rows() {
        y.row_mut(r).copy_from_slice(b.data());
    }
    matmul_acc(x, w, &mut y);
    Ok(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineGrads {
    pub dx: Tensor2,
    pub dw: Tensor2,
    pub db: Tensor2,
}

pub fn affine_backward(x: &Tensor2, w: &Tensor2, dy: &Tensor2) -> Result<AffineGrads, NnError> {
    Ok(AffineGrads {
        dx: dy.matmul_nt(w)?,
        dw: x.matmul_tn(dy)?,
        db: dy.sum_rows(),
    })
}

/// Inverted dropout. In train mode each entry survives with probability
/// `1 - rate` and is scaled by `1 / (1 - rate)`; the returned mask holds
/// those per-entry factors so the backward pass is `dy ⊙ mask`. Eval mode
/// is the identity and returns no mask.
pub fn dropout<R: Rng + ?Sized>(
    x: &Tensor2,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor2, Option<Tensor2>), NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::Config(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mut mask = Tensor2::zeros(x.rows(), x.cols());
    for m in mask.data_mut() {
        *m = if rng.gen::<f64>() < rate { 0.0 } else { keep_scale };
    }
    let y = x.zip_map(&mask, |v, m| v * m)?;
    Ok((y, Some(mask)))
}

pub fn dropout_seeded(
    x: &Tensor2,
    rate: f64,
    mode: Mode,
    seed: u64,
) -> Result<(Tensor2, Option<Tensor2>), NnError> {
    dropout(x, rate, mode, &mut ChaCha8Rng::seed_from_u64(seed))
}
