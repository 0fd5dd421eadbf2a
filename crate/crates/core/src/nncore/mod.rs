//! Dense `f64` kernel: tensors, activations, the affine map, dropout,
//! binary cross-entropy, heavy-ball SGD and a central-difference gradient
//! checker.

mod activation;
mod gradcheck;
mod layers;
mod loss;
mod optim;
mod tensor;

pub use activation::{relu_slope, sigmoid, Activation};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, Objective};
pub use layers::{affine, affine_backward, dropout, dropout_seeded, AffineGrads, Mode};
pub use loss::{bce_grad, bce_loss, bce_mean, BCE_EPSILON};
pub use optim::SgdMomentum;
pub use tensor::Tensor2;

pub(crate) use tensor::{dot, matmul_acc, matmul_tn_acc};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}
