//! Activations, losses and the learning-rate schedule.

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Numerically stable softmax of a single row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

pub fn softmax_rows(m: &Matrix) -> Result<Matrix> {
    if !m.is_finite() {
        return Err(Error::NonFinite("softmax_rows input"));
    }
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        out.row_mut(r).copy_from_slice(&softmax(m.row(r)));
    }
    Ok(out)
}

/// Softmax cross-entropy for one example. Returns the loss and its gradient
/// with respect to the logits, `softmax(logits) - one_hot(label)`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cross_entropy logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    let loss = lse - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(x))` without overflow.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Cosine annealing from `lr0` at step 0 down to 0 at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::InvalidArgument("cosine_lr: total_steps must be positive".into()));
    }
    if step > total_steps {
        return Err(Error::InvalidArgument(format!(
            "cosine_lr: step {step} exceeds total {total_steps}"
        )));
    }
    let t = step as f64 / total_steps as f64;
    Ok(lr0 * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let hi = f(&probe);
        probe[i] = orig - eps;
        let lo = f(&probe);
        probe[i] = orig;
        if !hi.is_finite() || !lo.is_finite() {
            return Err(Error::NonFinite("finite_diff_grad objective"));
        }
        grad.push((hi - lo) / (2.0 * eps));
    }
    Ok(grad)
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over paired entries.
pub fn max_rel_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetric_and_shifted() {
        let m = Matrix::from_rows(&[vec![0.0, 0.0], vec![-3.0, -1.0], vec![1000.0, 1002.0]]).unwrap();
        let s = softmax_rows(&m).unwrap();
        assert_eq!(s.row(0), &[0.5, 0.5]);
        let c: f64 = 2.0;
        let want = [1.0 / (1.0 + c.exp()), c.exp() / (1.0 + c.exp())];
        for r in 1..3 {
            for (g, w) in s.row(r).iter().zip(want) {
                assert!((g - w).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_of_one_two_three_matches_scalar_oracle() {
        // Reference values from a 40-digit evaluation of e^k / (e + e^2 + e^3).
        let s = softmax_rows(&Matrix::row_vector(&[1.0, 2.0, 3.0])).unwrap();
        let want = [0.090_030_573_170_380_458, 0.244_728_471_054_797_65, 0.665_240_955_774_821_89];
        for (g, w) in s.row(0).iter().zip(want) {
            assert!((g - w).abs() < 1e-15, "{g} vs {w}");
        }
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(softmax_rows(&Matrix::row_vector(&[0.0, f64::NAN])).is_err());
    }

    #[test]
    fn cross_entropy_uniform_and_saturated() {
        let (loss, grad) = cross_entropy(&[0.0, 0.0], 0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(grad, vec![-0.5, 0.5]);
        let (loss, _) = cross_entropy(&[60.0, 0.0], 0).unwrap();
        assert!(loss < 1e-25);
        assert!(cross_entropy(&[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn cross_entropy_three_class_oracle() {
        // Reference values from a 40-digit evaluation of ln(e + e^-1 + e^0.5) - 0.5
        // and the corresponding softmax.
        let (loss, grad) = cross_entropy(&[1.0, -1.0, 0.5], 2).unwrap();
        assert!((loss - 1.054_956_919_641_990_6).abs() < 1e-14, "{loss}");
        let want = [0.574_096_992_967_694_56, 0.077_695_579_148_570_588, 0.348_207_427_883_734_85 - 1.0];
        for (g, w) in grad.iter().zip(want) {
            assert!((g - w).abs() < 1e-14, "{g} vs {w}");
        }
    }

    #[test]
    fn cosine_schedule_landmarks() {
        assert_eq!(cosine_lr(0, 10, 2e-4).unwrap(), 2e-4);
        assert!(cosine_lr(10, 10, 2e-4).unwrap().abs() < 1e-20);
        assert!((cosine_lr(5, 10, 2e-4).unwrap() - 1e-4).abs() < 1e-18);
        assert!(cosine_lr(0, 0, 1.0).is_err());
        assert!(cosine_lr(11, 10, 1.0).is_err());
    }

    #[test]
    fn finite_differences_basic() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
        let g = finite_diff_grad(|_| 4.2, &[1.0, 2.0], 1e-5).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        assert!(finite_diff_grad(|x| x[0].ln(), &[0.0], 1e-5).is_err());
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
        assert!((sigmoid(0.3) - 1.0 / (1.0 + (-0.3f64).exp())).abs() < 1e-16);
    }
}
