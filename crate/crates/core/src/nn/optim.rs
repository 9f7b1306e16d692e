use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for SgdConfig {
    // Tuned for stable training on a few dozen trials.
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 16,
            epochs: 200,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// `p <- p - lr * g` for every parameter tensor.
pub fn sgd_step(params: Vec<&mut [f64]>, grads: &[Vec<f64>], lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::dim(
            "sgd_step",
            format!("{} parameter tensors", params.len()),
            format!("{} gradient tensors", grads.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() {
            return Err(Error::dim(
                "sgd_step",
                format!("parameter {i} of length {}", p.len()),
                format!("gradient of length {}", g.len()),
            ));
        }
    }
    for (p, g) in params.into_iter().zip(grads) {
        for (pv, gv) in p.iter_mut().zip(g) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_leaves_params() {
        let mut p = vec![1.0, -2.0];
        sgd_step(vec![&mut p], &[vec![5.0, 5.0]], 0.0).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn single_step() {
        let mut p = vec![1.0];
        sgd_step(vec![&mut p], &[vec![0.5]], 0.1).unwrap();
        assert!((p[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn two_steps_equal_one_double_step() {
        let g = vec![vec![0.25, -0.75]];
        let mut a = vec![0.5, 0.5];
        let mut b = a.clone();
        sgd_step(vec![&mut a], &g, 0.125).unwrap();
        sgd_step(vec![&mut a], &g, 0.125).unwrap();
        sgd_step(vec![&mut b], &g, 0.25).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let mut p = vec![1.0, 2.0];
        let err = sgd_step(vec![&mut p], &[vec![1.0]], 0.1).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn config_validation() {
        assert!(SgdConfig::default().validate().is_ok());
        let bad = SgdConfig {
            learning_rate: 0.0,
            ..SgdConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SgdConfig {
            batch_size: 0,
            ..SgdConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
