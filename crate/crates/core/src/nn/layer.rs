use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{matmul, matmul_nt, matmul_tn, Matrix};
use crate::error::{Error, Result};

/// Glorot-uniform matrix of shape `fan_in x fan_out`, entries in
/// `±sqrt(6 / (fan_in + fan_out))`.
///
/// A zero fan yields an empty matrix (used by the nuisance head when the
/// nuisance slice has no columns).
pub fn init_glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Matrix {
    let mut m = Matrix::zeros(fan_in, fan_out);
    if fan_in == 0 || fan_out == 0 {
        return m;
    }
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for w in m.as_mut_slice() {
        *w = rng.random_range(-limit..=limit);
    }
    m
}

/// Gradients of one dense layer, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `fan_in x fan_out`
    pub weights: Matrix,
    pub bias: Vec<f64>,
    #[serde(skip)]
    cached_input: Option<Matrix>,
}

impl PartialEq for DenseLayer {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights && self.bias == other.bias
    }
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::dim(
                "DenseLayer::new",
                weights.shape_str(),
                format!("bias of length {}", bias.len()),
            ));
        }
        Ok(Self {
            weights,
            bias,
            cached_input: None,
        })
    }

    pub fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: init_glorot(rng, fan_in, fan_out),
            bias: vec![0.0; fan_out],
            cached_input: None,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    /// `x·W + b` without touching the cache.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.weights.rows() {
            return Err(Error::dim(
                "dense_forward",
                format!("input {}", x.shape_str()),
                format!("weights {}", self.weights.shape_str()),
            ));
        }
        let mut out = matmul(x, &self.weights)?;
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// `x·W + b`, caching `x` for [`DenseLayer::backward`].
    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let out = self.predict(x)?;
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    /// Returns `(grad_in, grads)` for the last cached forward input.
    pub fn backward(&self, grad_out: &Matrix) -> Result<(Matrix, DenseGrads)> {
        let input = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::State("dense backward called before forward".into()))?;
        if grad_out.rows() != input.rows() || grad_out.cols() != self.fan_out() {
            return Err(Error::dim(
                "dense_backward",
                format!("grad_out {}", grad_out.shape_str()),
                format!("output {}x{}", input.rows(), self.fan_out()),
            ));
        }
        let grad_in = matmul_nt(grad_out, &self.weights)?;
        let weights = matmul_tn(input, grad_out)?;
        let bias = grad_out.column_sums();
        Ok((grad_in, DenseGrads { weights, bias }))
    }

    pub fn clear_cache(&mut self) {
        self.cached_input = None;
    }
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

/// Passes `grad_out` where `x > 0`; the subgradient at exactly zero is 0.
pub fn relu_backward(x: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
    if x.shape() != grad_out.shape() {
        return Err(Error::dim("relu_backward", x.shape_str(), grad_out.shape_str()));
    }
    let values = x
        .as_slice()
        .iter()
        .zip(grad_out.as_slice())
        .map(|(&xv, &g)| if xv > 0.0 { g } else { 0.0 })
        .collect();
    Matrix::from_vec(x.rows(), x.cols(), values)
}
