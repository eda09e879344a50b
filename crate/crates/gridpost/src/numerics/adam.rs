//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

/// First/second moment estimates per parameter tensor, plus the step count.
#[derive(Clone, Debug)]
pub struct AdamState<S> {
    t: u64,
    m: Vec<Tensor<S>>,
    v: Vec<Tensor<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &[&Tensor<S>]) -> Self {
        AdamState {
            t: 0,
            m: params
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()).expect("param shape valid"))
                .collect(),
            v: params
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()).expect("param shape valid"))
                .collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update over a parameter list; moments and parameters are updated
/// in place, the step count is incremented.
pub fn adam_step<S: Scalar>(
    params: &mut [&mut Tensor<S>],
    grads: &[&Tensor<S>],
    state: &mut AdamState<S>,
    cfg: &AdamConfig,
) -> Result<()> {
    cfg.validate()?;
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    let lr = S::from_f64(cfg.lr);
    let beta1 = S::from_f64(cfg.beta1);
    let beta2 = S::from_f64(cfg.beta2);
    let one_m_beta1 = S::from_f64(1.0 - cfg.beta1);
    let one_m_beta2 = S::from_f64(1.0 - cfg.beta2);
    let inv_bc1 = S::from_f64(1.0 / bc1);
    let inv_bc2 = S::from_f64(1.0 / bc2);
    let eps = S::from_f64(cfg.eps);
    for (i, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
        if param.shape() != grad.shape() || param.shape() != state.m[i].shape() {
            return Err(Error::shape(format!(
                "adam: shape mismatch at parameter {i}: param {:?}, grad {:?}",
                param.shape(),
                grad.shape()
            )));
        }
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((p, g), mi), vi) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = beta1 * *mi + one_m_beta1 * *g;
            *vi = beta2 * *vi + one_m_beta2 * *g * *g;
            let m_hat = *mi * inv_bc1;
            let v_hat = *vi * inv_bc2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(p0: f64) -> (Tensor<f64>, AdamState<f64>) {
        let p = Tensor::new(vec![2], vec![p0, -p0]).unwrap();
        let state = AdamState::new(&[&p]);
        (p, state)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut p, mut state) = setup(1.5);
        let g = Tensor::zeros(vec![2]).unwrap();
        adam_step(&mut [&mut p], &[&g], &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(p.data(), &[1.5, -1.5]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // At t=1 the bias-corrected update is lr * g / (|g| + eps') = lr * sign(g).
        let (mut p, mut state) = setup(0.0);
        let g = Tensor::new(vec![2], vec![0.37, -4.2]).unwrap();
        let cfg = AdamConfig::with_lr(0.001);
        adam_step(&mut [&mut p], &[&g], &mut state, &cfg).unwrap();
        assert!((p.data()[0] + 0.001).abs() < 1e-6);
        assert!((p.data()[1] - 0.001).abs() < 1e-6);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let (mut p, mut state) = setup(0.0);
        let g = Tensor::new(vec![2], vec![1.0, -1.0]).unwrap();
        let cfg = AdamConfig::default();
        adam_step(&mut [&mut p], &[&g], &mut state, &cfg).unwrap();
        let after_one = p.data().to_vec();
        adam_step(&mut [&mut p], &[&g], &mut state, &cfg).unwrap();
        assert!(p.data()[0] < after_one[0] && after_one[0] < 0.0);
        assert!(p.data()[1] > after_one[1] && after_one[1] > 0.0);
    }
}
