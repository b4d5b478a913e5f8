//! Central finite-difference gradient checking.
//!
//! The numerical side only ever evaluates the forward closure, so it stays
//! independent of the autodiff path it verifies. Checks run in `f64`; the
//! default step is `1e-5` and the acceptance bar is a relative error below
//! `1e-4` elementwise.

use super::{sum_all, Result, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Relative error with a floor so that near-zero pairs compare absolutely.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs().max(b.abs())).max(1e-6)
}

/// Central finite differences of a scalar function of a flat value vector.
pub fn finite_difference<F>(f: &F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Compare an autodiff gradient against finite differences; returns the worst
/// relative error.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Gradient-check a tensor-to-tensor op through a sum-of-outputs loss.
/// Panics (test helper) when the relative error exceeds the tolerance.
pub fn check_unary_op<F>(name: &str, values: &[f64], shape: &[usize], op: F)
where
    F: Fn(&Tensor<f64>) -> Result<Tensor<f64>>,
{
    let leaf = Tensor::leaf_with_grad(values.to_vec(), shape).unwrap();
    let loss = sum_all(&op(&leaf).unwrap()).unwrap();
    loss.backward().unwrap();
    let analytic = leaf.grad().unwrap();

    let shape = shape.to_vec();
    let f = |x: &[f64]| {
        let t = Tensor::from_vec(x.to_vec(), &shape).unwrap();
        sum_all(&op(&t).unwrap()).unwrap().item()
    };
    let numeric = finite_difference(&f, values, FD_STEP);
    let err = max_relative_error(&analytic, &numeric);
    assert!(
        err < FD_TOLERANCE,
        "{}: gradient mismatch, max relative error {:.3e}\n analytic: {:?}\n numeric:  {:?}",
        name,
        err,
        analytic,
        numeric
    );
}

/// Gradient-check an arbitrary scalar-valued graph with respect to one leaf.
/// `build` maps candidate leaf values to the loss value; `analytic` is the
/// gradient the graph produced for the same leaf.
pub fn check_against_fd<F>(name: &str, x0: &[f64], analytic: &[f64], build: F)
where
    F: Fn(&[f64]) -> f64,
{
    let numeric = finite_difference(&build, x0, FD_STEP);
    let err = max_relative_error(analytic, &numeric);
    assert!(
        err < FD_TOLERANCE,
        "{}: gradient mismatch, max relative error {:.3e}",
        name,
        err
    );
}
