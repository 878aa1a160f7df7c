use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Mean over rows of `−log softmax(logits)[label]`, with gradient
/// `(softmax − onehot) / rows`.
pub fn cross_entropy_loss(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (m, c) = logits.dim();
    if labels.len() != m {
        return Err(Error::dim(format!("{m} logit rows for {} labels", labels.len())));
    }
    if m == 0 {
        return Err(Error::invalid("cross entropy over zero rows"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::invalid(format!("label {bad} out of range for {c} classes")));
    }
    let mut grad = Array2::zeros((m, c));
    let mut loss = 0.0;
    for (i, (row, &label)) in logits.axis_iter(Axis(0)).zip(labels).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[label];
        for (j, &z) in row.iter().enumerate() {
            grad[[i, j]] = (z - log_z).exp();
        }
        grad[[i, label]] -= 1.0;
    }
    let scale = 1.0 / m as f64;
    grad.mapv_inplace(|g| g * scale);
    Ok((loss * scale, grad))
}

/// Weighted mean squared error. `mask` holds nonnegative per-entry weights;
/// the mean divides by their sum (or by the entry count without a mask).
pub fn mse_loss(pred: &Array2<f64>, target: &Array2<f64>, mask: Option<&Array2<f64>>) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::dim(format!("prediction {:?} vs target {:?}", pred.dim(), target.dim())));
    }
    let diff = pred - target;
    let (weighted, count) = match mask {
        Some(m) => {
            if m.dim() != pred.dim() {
                return Err(Error::dim("mask shape differs from prediction"));
            }
            (&diff * m, m.sum())
        }
        None => (diff.clone(), diff.len() as f64),
    };
    if count <= 0.0 {
        return Err(Error::invalid("mean squared error over an empty mask"));
    }
    let loss = (&weighted * &diff).sum() / count;
    let grad = weighted.mapv(|v| 2.0 * v / count);
    Ok((loss, grad))
}

/// Row-wise argmax; ties go to the lowest index.
pub fn argmax_rows(scores: &Array2<f64>) -> Vec<usize> {
    scores
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;
    use rand::Rng as _;

    #[test]
    fn uniform_logits_give_log_classes() {
        let (l, _) = cross_entropy_loss(&Array2::zeros((3, 5)), &[0, 2, 4]).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_logits_approach_zero() {
        let mut last = f64::INFINITY;
        for margin in [1.0, 5.0, 20.0, 50.0] {
            let (l, _) = cross_entropy_loss(&array![[margin, 0.0, 0.0]], &[0]).unwrap();
            assert!(l < last);
            last = l;
        }
        assert!(last < 1e-20);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut r = rng::seeded(3);
        let logits = Array2::from_shape_simple_fn((4, 5), || r.random_range(-2.0..2.0));
        let labels = [1, 0, 4, 2];
        let (_, g) = cross_entropy_loss(&logits, &labels).unwrap();
        let h = 1e-6;
        for idx in [(0, 0), (0, 1), (2, 3), (3, 2)] {
            let mut p = logits.clone();
            p[idx] += h;
            let mut q = logits.clone();
            q[idx] -= h;
            let fd =
                (cross_entropy_loss(&p, &labels).unwrap().0 - cross_entropy_loss(&q, &labels).unwrap().0) / (2.0 * h);
            assert!((fd - g[idx]).abs() <= 1e-6 * fd.abs().max(g[idx].abs()).max(1e-3), "{fd} vs {}", g[idx]);
        }
    }

    #[test]
    fn label_out_of_range() {
        assert!(cross_entropy_loss(&Array2::zeros((1, 3)), &[3]).is_err());
    }

    #[test]
    fn mse_examples() {
        let t = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(mse_loss(&t, &t, None).unwrap().0, 0.0);
        assert_eq!(mse_loss(&(&t + 1.0), &t, None).unwrap().0, 1.0);
        let mask = array![[0.0, 0.0], [1.0, 0.0]];
        let pred = array![[9.0, 9.0], [6.0, 9.0]];
        let (l, g) = mse_loss(&pred, &t, Some(&mask)).unwrap();
        assert_eq!(l, 9.0);
        assert_eq!(g, array![[0.0, 0.0], [6.0, 0.0]]);
        assert!(mse_loss(&t, &Array2::zeros((1, 2)), None).is_err());
    }

    #[test]
    fn argmax_ties_and_scaling() {
        assert_eq!(argmax_rows(&array![[1.0, 3.0, 3.0], [0.0, 0.0, -1.0]]), vec![1, 0]);
        let s = array![[0.2, -1.0, 0.7]];
        assert_eq!(argmax_rows(&s), argmax_rows(&(&s * 13.0)));
    }
}
