//! Masked losses. Means run over valid (unpadded) frame elements only, so
//! appending padded frames to a batch never changes a loss or its gradient.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Mean squared error over `count` valid elements and its gradient w.r.t.
/// `pred`. `count` is the denominator shared across the items of a batch.
pub fn mse_with_grad(
    pred: &Array2<f64>,
    target: &Array2<f64>,
    count: usize,
) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "mse shapes differ: {:?} vs {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if count == 0 {
        return Err(Error::Parameter("mse over an empty mask".into()));
    }
    let diff = pred - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count as f64;
    let grad = diff * (2.0 / count as f64);
    Ok((loss, grad))
}

/// Mean squared error of one prediction/target pair.
pub fn mse(pred: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    let count = pred.len();
    mse_with_grad(pred, target, count).map(|(l, _)| l)
}

/// Cross-entropy of row-wise class probabilities against integer labels,
/// meaned over `count` valid rows. Returns the gradient w.r.t. the
/// probabilities (the softmax layer's backward completes the chain).
pub fn cross_entropy_with_grad(
    probs: &Array2<f64>,
    labels: &[usize],
    count: usize,
) -> Result<(f64, Array2<f64>)> {
    if probs.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "cross entropy got {} rows but {} labels",
            probs.nrows(),
            labels.len()
        )));
    }
    if count == 0 {
        return Err(Error::Parameter("cross entropy over an empty mask".into()));
    }
    let k = probs.ncols();
    let mut loss = 0.0;
    let mut grad = Array2::zeros(probs.raw_dim());
    for (t, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::Shape(format!(
                "label {label} out of range for {k} classes"
            )));
        }
        let p = probs[[t, label]].max(1e-300);
        loss -= p.ln();
        grad[[t, label]] = -1.0 / (p * count as f64);
    }
    Ok((loss / count as f64, grad))
}

pub fn cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    cross_entropy_with_grad(probs, labels, labels.len()).map(|(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn mse_zero_when_equal() {
        let a = arr2(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn mse_constant_offset() {
        let target = arr2(&[[1.0, 2.0], [3.0, 4.0]]);
        let pred = &target + 2.0;
        assert!((mse(&pred, &target).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn mse_shape_mismatch_rejected() {
        let a = arr2(&[[1.0, 2.0]]);
        let b = arr2(&[[1.0], [2.0]]);
        assert!(mse(&a, &b).is_err());
    }

    #[test]
    fn cross_entropy_uniform_is_ln_k() {
        let k = 7;
        let probs = Array2::from_elem((3, k), 1.0 / k as f64);
        let ce = cross_entropy(&probs, &[0, 3, 6]).unwrap();
        assert!((ce - (k as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let probs = arr2(&[[0.5, 0.5]]);
        assert!(cross_entropy(&probs, &[2]).is_err());
    }

    #[test]
    fn empty_mask_rejected() {
        let probs = arr2(&[[0.5, 0.5]]);
        assert!(cross_entropy_with_grad(&probs, &[0], 0).is_err());
        let a = arr2(&[[1.0]]);
        assert!(mse_with_grad(&a, &a, 0).is_err());
    }
}
