use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Row-wise softmax, stabilized by subtracting each row's max.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
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
    out
}

/// Mean softmax cross-entropy over rows and its gradient w.r.t. the logits,
/// `(softmax - onehot) / n_rows`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (n, k) = logits.shape();
    if labels.len() != n {
        return Err(Error::dim(
            "softmax_cross_entropy",
            format!("logits {}", logits.shape_str()),
            format!("{} labels", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Validation(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    if n == 0 {
        return Ok((0.0, Matrix::zeros(0, k)));
    }
    let mut grad = Matrix::zeros(n, k);
    let mut total = 0.0;
    let scale = 1.0 / n as f64;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[label];
        let g = grad.row_mut(r);
        for (j, gv) in g.iter_mut().enumerate() {
            let p = (row[j] - log_z).exp();
            *gv = (p - if j == label { 1.0 } else { 0.0 }) * scale;
        }
    }
    Ok((total * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Matrix::from_rows(&[[0.3; 4], [0.3; 4]]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn two_class_closed_form() {
        // p0 = 3 / (3 + 1)
        let logits = Matrix::from_rows(&[[3f64.ln(), 0.0]]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!((loss - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((loss - 0.2877).abs() < 1e-4);
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let logits = Matrix::from_rows(&[[1.0, -2.0, 0.5], [10.0, 9.0, -30.0]]).unwrap();
        let (_, grad) = softmax_cross_entropy(&logits, &[2, 0]).unwrap();
        for r in 0..grad.rows() {
            assert!(grad.row(r).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn large_logits_stay_finite() {
        let logits = Matrix::from_rows(&[[1000.0, -1000.0, 0.0]]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!(loss.is_finite() && grad.is_finite());
        assert!((loss - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn label_out_of_range_rejected() {
        let logits = Matrix::zeros(1, 3);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[3]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn softmax_uniform() {
        let p = softmax_rows(&Matrix::zeros(1, 20));
        assert!(p.as_slice().iter().all(|&v| (v - 0.05).abs() < 1e-15));
    }
}
