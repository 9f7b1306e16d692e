//! Linear probes for how much subject information a latent slice carries.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Samples;
use crate::error::{Error, Result};
use crate::model::DisentangledModel;
use crate::nn::{matmul, softmax_cross_entropy, Encoder, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentSlice {
    /// `z_a`, the adversary's input.
    Adversary,
    /// `z_n`, the nuisance network's input.
    Nuisance,
    Full,
}

/// Multinomial logistic regression on standardized features.
#[derive(Debug, Clone)]
pub struct SoftmaxRegression {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl SoftmaxRegression {
    fn standardized(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.scale[c];
            }
        }
        out
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = matmul(&self.standardized(x), &self.weights)?;
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.argmax_rows())
    }

    pub fn accuracy(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        let pred = self.predict(x)?;
        let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / labels.len().max(1) as f64)
    }
}

/// Full-batch gradient descent from zero weights.
pub fn fit_softmax_regression(
    x: &Matrix,
    labels: &[usize],
    num_classes: usize,
    iterations: usize,
    learning_rate: f64,
) -> Result<SoftmaxRegression> {
    let (n, d) = x.shape();
    if n == 0 || labels.len() != n {
        return Err(Error::Validation(format!("probe needs labelled rows, got {n} rows and {} labels", labels.len())));
    }
    let mean: Vec<f64> = x.column_sums().iter().map(|s| s / n as f64).collect();
    let mut scale = vec![0.0; d];
    for r in 0..n {
        for (c, v) in x.row(r).iter().enumerate() {
            scale[c] += (v - mean[c]).powi(2);
        }
    }
    for s in &mut scale {
        *s = (*s / n as f64).sqrt().max(1e-8);
    }
    let mut model = SoftmaxRegression {
        weights: Matrix::zeros(d, num_classes),
        bias: vec![0.0; num_classes],
        mean,
        scale,
    };
    let xs = model.standardized(x);
    for _ in 0..iterations {
        let (_, grad) = softmax_cross_entropy(&model.logits(x)?, labels)?;
        let gw = crate::nn::matmul_tn(&xs, &grad)?;
        model.weights.add_scaled(&gw, -learning_rate)?;
        for (b, g) in model.bias.iter_mut().zip(grad.column_sums()) {
            *b -= learning_rate * g;
        }
    }
    Ok(model)
}

/// Trains a fresh softmax probe on the chosen latent slice to recover the
/// subject, on a seeded 70% of `samples`, and returns its accuracy on the
/// remaining 30%.
pub fn probe_subject_information<E: Encoder>(
    model: &DisentangledModel<E>,
    samples: &Samples,
    slice: LatentSlice,
    seed: u64,
) -> Result<f64> {
    let mut distinct = samples.subjects.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Validation("probe needs trials from at least 2 subjects".into()));
    }
    let z = model.encode(&samples.x)?;
    let (z_a, z_n) = model.split(&z)?;
    let features = match slice {
        LatentSlice::Adversary => z_a,
        LatentSlice::Nuisance => z_n,
        LatentSlice::Full => z,
    };
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_fit = (samples.len() * 7).div_ceil(10).min(samples.len() - 1);
    let (fit, held) = idx.split_at(n_fit);
    let labels = samples.subject_classes();
    let pick = |ix: &[usize]| ix.iter().map(|&i| labels[i]).collect::<Vec<_>>();
    let probe = fit_softmax_regression(
        &features.select_rows(fit),
        &pick(fit),
        model.config.num_subjects,
        300,
        0.5,
    )?;
    probe.accuracy(&features.select_rows(held), &pick(held))
}
