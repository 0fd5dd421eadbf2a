use serde::{Deserialize, Serialize};

use super::{NnError, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    /// Softmax over each row, max-subtracted.
    SoftmaxRow,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Rectifier slope; at exactly zero the symmetric subgradient 1/2, which
/// is also what a central difference measures there.
#[inline]
pub fn relu_slope(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x == 0.0 {
        0.5
    } else {
        0.0
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

impl Activation {
    pub fn forward(self, x: &Tensor2) -> Tensor2 {
        match self {
            Activation::Sigmoid => x.map(sigmoid),
            Activation::Tanh => x.map(f64::tanh),
            Activation::Relu => x.map(|v| v.max(0.0)),
            Activation::SoftmaxRow => {
                let mut y = x.clone();
                for r in 0..y.rows() {
                    softmax_in_place(y.row_mut(r));
                }
                y
            }
        }
    }

    /// Gradient with respect to the pre-activation `x`, given the gradient
    /// flowing into the activation output.
    pub fn backward(self, x: &Tensor2, upstream: &Tensor2) -> Result<Tensor2, NnError> {
        match self {
            Activation::Sigmoid => x.zip_map(upstream, |v, g| {
                let s = sigmoid(v);
                g * s * (1.0 - s)
            }),
            Activation::Tanh => x.zip_map(upstream, |v, g| {
                let t = v.tanh();
                g * (1.0 - t * t)
            }),
            Activation::Relu => x.zip_map(upstream, |v, g| g * relu_slope(v)),
            Activation::SoftmaxRow => {
                let y = self.forward(x);
                let mut dx = y.zip_map(upstream, |_, g| g)?;
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let weighted: f64 = yr.iter().zip(upstream.row(r)).map(|(a, b)| a * b).sum();
                    for (d, &yi) in dx.row_mut(r).iter_mut().zip(yr) {
                        *d = yi * (*d - weighted);
                    }
                }
                Ok(dx)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const ALL: [Activation; 4] = [
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Relu,
        Activation::SoftmaxRow,
    ];

    #[test]
    fn fixed_points() {
        let z = Tensor2::zeros(1, 1);
        assert_eq!(Activation::Sigmoid.forward(&z).get(0, 0), 0.5);
        assert_eq!(Activation::Tanh.forward(&z).get(0, 0), 0.0);
        let neg = Tensor2::filled(1, 1, -2.0);
        assert_eq!(Activation::Relu.forward(&neg).get(0, 0), 0.0);
    }

    #[test]
    fn softmax_of_constant_row_is_uniform() {
        let x = Tensor2::filled(2, 5, 3.7);
        let y = Activation::SoftmaxRow.forward(&x);
        assert!(y.data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn softmax_rows_sum_to_one_and_ignore_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let data: Vec<f64> = (0..12).map(|_| rng.gen_range(-20.0..20.0)).collect();
            let x = Tensor2::from_vec(3, 4, data).unwrap();
            let y = Activation::SoftmaxRow.forward(&x);
            let shifted = Activation::SoftmaxRow.forward(&x.map(|v| v + 7.25));
            for r in 0..3 {
                assert!((y.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            for (a, b) in y.data().iter().zip(shifted.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    /// Central differences on `sum(upstream ⊙ f(x))`.
    fn numeric_grad(act: Activation, x: &Tensor2, upstream: &Tensor2, h: f64) -> Tensor2 {
        let objective = |x: &Tensor2| -> f64 {
            act.forward(x)
                .data()
                .iter()
                .zip(upstream.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let mut grad = Tensor2::zeros(x.rows(), x.cols());
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            grad.data_mut()[i] = (objective(&plus) - objective(&minus)) / (2.0 * h);
        }
        grad
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for act in ALL {
            for _ in 0..20 {
                // keep relu inputs away from the kink
                let data: Vec<f64> = (0..12)
                    .map(|_| {
                        let v: f64 = rng.gen_range(0.05..2.0);
                        if rng.gen_bool(0.5) {
                            -v
                        } else {
                            v
                        }
                    })
                    .collect();
                let x = Tensor2::from_vec(3, 4, data).unwrap();
                let up_data: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let upstream = Tensor2::from_vec(3, 4, up_data).unwrap();
                let analytic = act.backward(&x, &upstream).unwrap();
                let numeric = numeric_grad(act, &x, &upstream, 1e-5);
                for (a, n) in analytic.data().iter().zip(numeric.data()) {
                    let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
                    assert!(rel < 1e-6, "{act:?}: analytic {a} numeric {n} rel {rel}");
                }
            }
        }
    }

    #[test]
    fn relu_kink_uses_the_central_slope() {
        let x = Tensor2::zeros(1, 1);
        let g = Activation::Relu.backward(&x, &Tensor2::filled(1, 1, 2.0)).unwrap();
        assert_eq!(g.get(0, 0), 1.0);
        let numeric = numeric_grad(Activation::Relu, &x, &Tensor2::filled(1, 1, 2.0), 1e-5);
        assert!((numeric.get(0, 0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!(sigmoid(-30.0) > 0.0);
    }
}
