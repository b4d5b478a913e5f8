//! Training losses: mean squared error and binary cross-entropy, both
//! averaged over every element so a batch of identical examples scores the
//! same as a single example.

use std::sync::Arc;

use super::{BackwardFn, Result, Tensor, TensorError};
use crate::scalar::Scalar;

/// Predictions are clamped into `[eps, 1-eps]` before the logs; gradients are
/// zero where the clamp is active.
pub const BCE_CLAMP_EPS: f64 = 1e-7;

/// Mean of squared differences over all elements.
pub fn loss_mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    const OP: &str = "loss_mse";
    if pred.shape() != target.shape() {
        return Err(TensorError::ShapeMismatch {
            op: OP,
            detail: format!("{:?} vs {:?}", pred.shape(), target.shape()),
        });
    }
    let n = pred.numel();
    if n == 0 {
        return Err(TensorError::Invalid { op: OP, detail: "empty input".into() });
    }
    let inv_n = T::from_f64(1.0 / n as f64);
    let mut acc = T::zero();
    for (&p, &t) in pred.values().iter().zip(target.values()) {
        let d = p - t;
        acc += d * d;
    }
    let (pd, td) = (Arc::clone(&pred.inner.data), Arc::clone(&target.inner.data));
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| {
        let two = T::from_f64(2.0);
        let dp: Vec<T> =
            pd.iter().zip(td.iter()).map(|(&p, &t)| g[0] * two * (p - t) * inv_n).collect();
        let dt: Vec<T> = dp.iter().map(|&v| -v).collect();
        vec![Some(dp), Some(dt)]
    });
    Tensor::from_op(OP, vec![acc * inv_n], vec![], vec![pred.clone(), target.clone()], backward)
}

/// Mean binary cross-entropy; targets may be soft (anywhere in `[0, 1]`).
pub fn loss_bce<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    loss_bce_weighted(pred, target, 1.0)
}

/// Binary cross-entropy with the positive-target term scaled by
/// `pos_weight`; a knob for label imbalance, neutral at 1.
pub fn loss_bce_weighted<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    pos_weight: f64,
) -> Result<Tensor<T>> {
    const OP: &str = "loss_bce";
    if pred.shape() != target.shape() {
        return Err(TensorError::ShapeMismatch {
            op: OP,
            detail: format!("{:?} vs {:?}", pred.shape(), target.shape()),
        });
    }
    let n = pred.numel();
    if n == 0 {
        return Err(TensorError::Invalid { op: OP, detail: "empty input".into() });
    }
    if pos_weight <= 0.0 {
        return Err(TensorError::Invalid { op: OP, detail: "pos_weight must be positive".into() });
    }
    let w = T::from_f64(pos_weight);
    let lo = T::from_f64(BCE_CLAMP_EPS);
    let hi = T::one() - lo;
    let inv_n = T::from_f64(1.0 / n as f64);
    let mut acc = T::zero();
    for (&p, &t) in pred.values().iter().zip(target.values()) {
        let pc = p.max(lo).min(hi);
        acc = acc - w * t * pc.ln() - (T::one() - t) * (T::one() - pc).ln();
    }
    let (pd, td) = (Arc::clone(&pred.inner.data), Arc::clone(&target.inner.data));
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| {
        let mut dp = vec![T::zero(); pd.len()];
        let mut dt = vec![T::zero(); pd.len()];
        for (i, (&p, &t)) in pd.iter().zip(td.iter()).enumerate() {
            if p > lo && p < hi {
                // d/dp of -w t ln p - (1-t) ln(1-p)
                dp[i] = g[0] * ((T::one() - t) / (T::one() - p) - w * t / p) * inv_n;
            }
            let pc = p.max(lo).min(hi);
            dt[i] = g[0] * ((T::one() - pc).ln() - w * pc.ln()) * inv_n;
        }
        vec![Some(dp), Some(dt)]
    });
    Tensor::from_op(OP, vec![acc * inv_n], vec![], vec![pred.clone(), target.clone()], backward)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{sigmoid, sum_all};

    fn t(values: &[f64], shape: &[usize]) -> Tensor<f64> {
        Tensor::from_vec(values.to_vec(), shape).unwrap()
    }

    #[test]
    fn mse_zero_when_equal() {
        let p = t(&[0.2, 0.8, 0.5], &[3]);
        let y = loss_mse(&p, &p.clone()).unwrap();
        assert_eq!(y.item(), 0.0);
    }

    #[test]
    fn mse_worked_example() {
        let p = t(&[0.0, 1.0], &[2]);
        let y = t(&[1.0, 1.0], &[2]);
        assert_eq!(loss_mse(&p, &y).unwrap().item(), 0.5);
    }

    #[test]
    fn mse_rejects_shape_mismatch() {
        let p = t(&[0.0, 1.0], &[2]);
        let y = t(&[1.0], &[1]);
        assert!(loss_mse(&p, &y).is_err());
    }

    #[test]
    fn bce_at_half_is_ln2() {
        let p = t(&[0.5; 4], &[4]);
        let y = t(&[1.0, 0.0, 1.0, 0.0], &[4]);
        let l = loss_bce(&p, &y).unwrap().item();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_survives_saturated_predictions() {
        let p = t(&[0.0, 1.0], &[2]);
        let y = t(&[1.0, 0.0], &[2]);
        let l = loss_bce(&p, &y).unwrap();
        assert!(l.item().is_finite());
    }

    #[test]
    fn batch_of_identical_examples_equals_single_example_loss() {
        // Doubling one example leaves the mean bit-identical for any values.
        let p1 = t(&[0.3172], &[1, 1]);
        let y1 = t(&[1.0], &[1, 1]);
        let p2 = t(&[0.3172, 0.3172], &[2, 1]);
        let y2 = t(&[1.0, 1.0], &[2, 1]);
        assert_eq!(loss_mse(&p1, &y1).unwrap().item(), loss_mse(&p2, &y2).unwrap().item());
        assert_eq!(loss_bce(&p1, &y1).unwrap().item(), loss_bce(&p2, &y2).unwrap().item());

        // Wider rows stay exact when per-element terms are dyadic.
        let p1 = t(&[0.25, 0.75], &[1, 2]);
        let y1 = t(&[0.0, 1.0], &[1, 2]);
        let p4 = t(&[0.25, 0.75].repeat(4), &[4, 2]);
        let y4 = t(&[0.0, 1.0].repeat(4), &[4, 2]);
        assert_eq!(loss_mse(&p1, &y1).unwrap().item(), loss_mse(&p4, &y4).unwrap().item());
    }

    #[test]
    fn bce_through_sigmoid_has_pred_minus_target_gradient() {
        // d/dz bce(sigmoid(z), t) = (sigmoid(z) - t) / n, the classic identity.
        let z = Tensor::<f64>::leaf_with_grad(vec![0.3, -1.2, 2.0, 0.0], &[4]).unwrap();
        let y = t(&[1.0, 0.0, 1.0, 0.0], &[4]);
        let p = sigmoid(&z).unwrap();
        let l = loss_bce(&p, &y).unwrap();
        l.backward().unwrap();
        let g = z.grad().unwrap();
        for i in 0..4 {
            let expected = (p.values()[i] - y.values()[i]) / 4.0;
            assert!((g[i] - expected).abs() < 1e-10, "i={}: {} vs {}", i, g[i], expected);
        }
    }

    #[test]
    fn losses_are_scalars() {
        let p = t(&[0.1, 0.2], &[2]);
        let y = t(&[0.0, 1.0], &[2]);
        let l = loss_bce(&p, &y).unwrap();
        assert_eq!(l.numel(), 1);
        assert_eq!(l.rank(), 0);
        // and they can head a backward pass
        let _ = sum_all(&p).unwrap();
        l.backward().unwrap();
    }
}
