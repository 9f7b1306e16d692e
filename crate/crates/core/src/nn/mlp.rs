use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{relu, relu_backward, DenseGrads, DenseLayer};
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Flattened per-tensor gradients, in the same order as `params()`.
pub type GradSet = Vec<Vec<f64>>;

/// Anything with a flat list of trainable tensors.
pub trait Parameterized {
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Feature extractor feeding the latent code. The dense [`Mlp`] is the
/// default; other encoders plug in by implementing this trait.
pub trait Encoder: Parameterized + Clone + Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Forward pass that caches activations for [`Encoder::backward`].
    fn forward(&mut self, x: &Matrix) -> Result<Matrix>;
    /// Forward pass without caching.
    fn predict(&self, x: &Matrix) -> Result<Matrix>;
    /// Parameter gradients for the cached forward pass.
    fn backward(&self, grad_out: &Matrix) -> Result<GradSet>;
    /// Smallest |pre-activation| over every ReLU unit for input `x`.
    fn min_abs_preactivation(&self, _x: &Matrix) -> Result<f64> {
        Ok(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub hidden: DenseGrads,
    pub output: DenseGrads,
}

impl MlpGrads {
    pub fn into_set(self) -> GradSet {
        vec![
            self.hidden.weights.into_vec(),
            self.hidden.bias,
            self.output.weights.into_vec(),
            self.output.bias,
        ]
    }
}

/// `Linear -> ReLU -> Linear`. Used for the encoder and for every head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
    #[serde(skip)]
    hidden_pre: Option<Matrix>,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.hidden == other.hidden && self.output == other.output
    }
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, input: usize, hidden: usize, output: usize) -> Self {
        Self {
            hidden: DenseLayer::glorot(rng, input, hidden),
            output: DenseLayer::glorot(rng, hidden, output),
            hidden_pre: None,
        }
    }

    pub fn from_layers(hidden: DenseLayer, output: DenseLayer) -> Result<Self> {
        if hidden.fan_out() != output.fan_in() {
            return Err(Error::dim(
                "Mlp::from_layers",
                hidden.weights.shape_str(),
                output.weights.shape_str(),
            ));
        }
        Ok(Self {
            hidden,
            output,
            hidden_pre: None,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden.fan_out()
    }

    pub fn backward_full(&self, grad_out: &Matrix) -> Result<(Matrix, MlpGrads)> {
        let pre = self
            .hidden_pre
            .as_ref()
            .ok_or_else(|| Error::State("mlp backward called before forward".into()))?;
        let (grad_h, output) = self.output.backward(grad_out)?;
        let grad_pre = relu_backward(pre, &grad_h)?;
        let (grad_in, hidden) = self.hidden.backward(&grad_pre)?;
        Ok((grad_in, MlpGrads { hidden, output }))
    }

    pub fn hidden_preactivation(&self, x: &Matrix) -> Result<Matrix> {
        self.hidden.predict(x)
    }
}

impl Parameterized for Mlp {
    fn params(&self) -> Vec<&[f64]> {
        vec![
            self.hidden.weights.as_slice(),
            &self.hidden.bias,
            self.output.weights.as_slice(),
            &self.output.bias,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.hidden.weights.as_mut_slice(),
            &mut self.hidden.bias,
            self.output.weights.as_mut_slice(),
            &mut self.output.bias,
        ]
    }
}

impl Encoder for Mlp {
    fn input_dim(&self) -> usize {
        self.hidden.fan_in()
    }

    fn output_dim(&self) -> usize {
        self.output.fan_out()
    }

    fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let pre = self.hidden.forward(x)?;
        let out = self.output.forward(&relu(&pre))?;
        self.hidden_pre = Some(pre);
        Ok(out)
    }

    fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.output.predict(&relu(&self.hidden.predict(x)?))
    }

    fn backward(&self, grad_out: &Matrix) -> Result<GradSet> {
        Ok(self.backward_full(grad_out)?.1.into_set())
    }

    fn min_abs_preactivation(&self, x: &Matrix) -> Result<f64> {
        Ok(self
            .hidden
            .predict(x)?
            .as_slice()
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.abs())))
    }
}
