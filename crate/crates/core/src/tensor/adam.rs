//! Adam optimizer with bias correction.

use super::{Parameter, Result, TensorError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Per-parameter first/second moment buffers plus the shared step counter.
/// Slots align with the parameter list by position and are validated by name.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar> {
    pub step: u64,
    pub config: AdamConfig,
    slots: Vec<AdamSlot<T>>,
}

#[derive(Debug, Clone)]
struct AdamSlot<T: Scalar> {
    name: String,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[&Parameter<T>], config: AdamConfig) -> Self {
        let slots = params
            .iter()
            .map(|p| AdamSlot {
                name: p.name.clone(),
                m: vec![T::zero(); p.numel()],
                v: vec![T::zero(); p.numel()],
            })
            .collect();
        AdamState { step: 0, config, slots }
    }

    pub fn moments(&self, idx: usize) -> (&[T], &[T]) {
        (&self.slots[idx].m, &self.slots[idx].v)
    }

    /// Replace the moment buffers (checkpoint restore). Names must match the
    /// construction order.
    pub fn restore_moments(&mut self, idx: usize, m: Vec<T>, v: Vec<T>) -> Result<()> {
        let slot = &mut self.slots[idx];
        if m.len() != slot.m.len() || v.len() != slot.v.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_restore",
                detail: format!("moment size mismatch for '{}'", slot.name),
            });
        }
        slot.m = m;
        slot.v = v;
        Ok(())
    }

    pub fn slot_name(&self, idx: usize) -> &str {
        &self.slots[idx].name
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }
}

/// One Adam update over all parameters. Every parameter must carry a gradient
/// from a preceding backward pass; gradients are consumed (cleared) by the
/// update.
pub fn adam_step<T: Scalar>(params: &mut [&mut Parameter<T>], state: &mut AdamState<T>) -> Result<()> {
    if params.len() != state.slots.len() {
        return Err(TensorError::Invalid {
            op: "adam_step",
            detail: format!("{} params vs {} state slots", params.len(), state.slots.len()),
        });
    }
    state.step += 1;
    let t = state.step;
    let cfg = state.config;
    let lr = T::from_f64(cfg.lr);
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let eps = T::from_f64(cfg.epsilon);
    let bc1 = T::from_f64(1.0 - cfg.beta1.powi(t as i32));
    let bc2 = T::from_f64(1.0 - cfg.beta2.powi(t as i32));

    for (param, slot) in params.iter_mut().zip(state.slots.iter_mut()) {
        debug_assert_eq!(param.name, slot.name, "parameter order drifted from Adam state");
        let grad = param.grad().ok_or_else(|| TensorError::MissingGradient {
            name: param.name.clone(),
        })?;
        let mut next = param.values().to_vec();
        for i in 0..next.len() {
            let g = grad[i];
            slot.m[i] = b1 * slot.m[i] + (T::one() - b1) * g;
            slot.v[i] = b2 * slot.v[i] + (T::one() - b2) * g * g;
            let m_hat = slot.m[i] / bc1;
            let v_hat = slot.v[i] / bc2;
            next[i] = next[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
        param.set_values(next)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{loss_mse, mul, sum_all, Tensor};

    fn param(name: &str, values: &[f64]) -> Parameter<f64> {
        Parameter::new(name, values.to_vec(), &[values.len()]).unwrap()
    }

    /// Scalar Adam recurrence evaluated by hand, the oracle for adam_step.
    fn scalar_adam_oracle(theta0: f64, grads: &[f64], cfg: AdamConfig) -> f64 {
        let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
        for (i, &g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let m_hat = m / (1.0 - cfg.beta1.powi(t));
            let v_hat = v / (1.0 - cfg.beta2.powi(t));
            theta -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        theta
    }

    fn backward_fixed_grad(p: &Parameter<f64>, grad: &[f64]) {
        // loss = sum(p * grad) has d/dp = grad
        let g = Tensor::from_vec(grad.to_vec(), &[grad.len()]).unwrap();
        let loss = sum_all(&mul(&p.tensor, &g).unwrap()).unwrap();
        loss.backward().unwrap();
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = param("w", &[0.5, -1.5]);
        backward_fixed_grad(&p, &[0.0, 0.0]);
        let mut state = AdamState::new(&[&p], AdamConfig::default());
        adam_step(&mut [&mut p], &mut state).unwrap();
        assert_eq!(p.values(), &[0.5, -1.5]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_about_lr_against_gradient_sign() {
        let cfg = AdamConfig::default();
        let mut p = param("w", &[1.0, 1.0]);
        backward_fixed_grad(&p, &[0.37, -8.0]);
        let mut state = AdamState::new(&[&p], cfg);
        adam_step(&mut [&mut p], &mut state).unwrap();
        // Bias-corrected first step is -lr * g/|g| up to epsilon.
        assert!((p.values()[0] - (1.0 - cfg.lr)).abs() < 1e-6);
        assert!((p.values()[1] - (1.0 + cfg.lr)).abs() < 1e-6);
    }

    #[test]
    fn two_steps_match_scalar_recurrence_oracle() {
        let cfg = AdamConfig::default();
        let g = 0.8;
        let mut p = param("w", &[2.0]);
        let mut state = AdamState::new(&[&p], cfg);
        for _ in 0..2 {
            backward_fixed_grad(&p, &[g]);
            adam_step(&mut [&mut p], &mut state).unwrap();
        }
        let expected = scalar_adam_oracle(2.0, &[g, g], cfg);
        assert!((p.values()[0] - expected).abs() < 1e-15, "{} vs {}", p.values()[0], expected);
        assert_eq!(state.step, 2);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut p = param("w", &[1.0]);
        let mut state = AdamState::new(&[&p], AdamConfig::default());
        let err = adam_step(&mut [&mut p], &mut state).unwrap_err();
        assert!(matches!(err, TensorError::MissingGradient { .. }));
    }

    #[test]
    fn descends_a_quadratic() {
        // minimize (p - 3)^2; Adam should get close within a few hundred steps.
        let mut p = param("w", &[0.0]);
        let target = Tensor::from_vec(vec![3.0], &[1]).unwrap();
        let mut state = AdamState::new(&[&p], AdamConfig { lr: 0.05, ..Default::default() });
        for _ in 0..400 {
            let loss = loss_mse(&p.tensor, &target).unwrap();
            loss.backward().unwrap();
            adam_step(&mut [&mut p], &mut state).unwrap();
        }
        assert!((p.values()[0] - 3.0).abs() < 1e-2);
    }
}
