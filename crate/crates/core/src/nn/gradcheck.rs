//! Central finite-difference verification of analytic gradients.

use super::mlp::GradSet;
use crate::error::{Error, Result};

/// A loss with analytic gradients over a flat parameter list.
pub trait GradCheckable {
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
    fn loss(&mut self) -> Result<f64>;
    /// Analytic gradient, ordered like `params_mut()`.
    fn gradients(&mut self) -> Result<GradSet>;
}

/// Returns `max |analytic - numeric| / max(1, |numeric|)` over every parameter.
pub fn grad_check<T: GradCheckable + ?Sized>(target: &mut T, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Validation(format!("eps must be positive, got {eps}")));
    }
    let analytic = target.gradients()?;
    let shapes: Vec<usize> = target.params_mut().iter().map(|p| p.len()).collect();
    if shapes.len() != analytic.len()
        || shapes.iter().zip(&analytic).any(|(&n, g)| n != g.len())
    {
        return Err(Error::dim(
            "grad_check",
            format!("{shapes:?}"),
            format!("{:?}", analytic.iter().map(Vec::len).collect::<Vec<_>>()),
        ));
    }
    let mut worst = 0.0f64;
    for (t, len) in shapes.iter().enumerate() {
        for i in 0..*len {
            let original = target.params_mut()[t][i];
            target.params_mut()[t][i] = original + eps;
            let plus = target.loss()?;
            target.params_mut()[t][i] = original - eps;
            let minus = target.loss()?;
            target.params_mut()[t][i] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = (analytic[t][i] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
