use super::{NnError, Tensor2};

/// Heavy-ball SGD: `v ← μ·v − η·g`, `w ← w + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdMomentum {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Tensor2>,
}

impl SgdMomentum {
    /// Zero velocity shaped like `params`.
    pub fn new(learning_rate: f64, momentum: f64, params: &[Tensor2]) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: params
                .iter()
                .map(|p| Tensor2::zeros(p.rows(), p.cols()))
                .collect(),
        }
    }

    pub fn velocity(&self) -> &[Tensor2] {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut [Tensor2], grads: &[Tensor2]) -> Result<(), NnError> {
        if params.len() != self.velocity.len() || grads.len() != self.velocity.len() {
            return Err(NnError::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.velocity.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((w, g), v) in params.iter().zip(grads).zip(&self.velocity) {
            if !w.same_shape(g) || !w.same_shape(v) {
                return Err(NnError::Shape(format!(
                    "parameter {:?}, gradient {:?}, velocity {:?}",
                    w.shape(),
                    g.shape(),
                    v.shape()
                )));
            }
        }
        let (lr, mu) = (self.learning_rate, self.momentum);
        for ((w, g), v) in params.iter_mut().zip(grads).zip(self.velocity.iter_mut()) {
            for ((wi, &gi), vi) in w.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vi = mu * *vi - lr * gi;
                *wi += *vi;
            }
        }
        Ok(())
    }
}
