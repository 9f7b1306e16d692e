//! Minimal dense-network numerics: matrices, dense layers, ReLU, softmax
//! cross-entropy, plain SGD and finite-difference gradient checking.

mod gradcheck;
mod layer;
mod loss;
mod matrix;
mod mlp;
mod optim;

pub use gradcheck::{grad_check, GradCheckable};
pub use layer::{init_glorot, relu, relu_backward, DenseGrads, DenseLayer};
pub use loss::{softmax_cross_entropy, softmax_rows};
pub use matrix::{matmul, matmul_nt, matmul_tn, Matrix};
pub use mlp::{Encoder, GradSet, Mlp, MlpGrads, Parameterized};
pub use optim::{sgd_step, SgdConfig};
