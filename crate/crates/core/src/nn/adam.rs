use alloc::format;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for a fixed list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            config,
            step: 0,
            second: first.clone(),
            first,
        }
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }
}

/// One bias-corrected Adam update of every parameter in place.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::Shape(format!(
            "adam: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if !p.same_shape(g) || !p.same_shape(&state.first[i]) {
            return Err(Error::Shape(format!(
                "adam: parameter {i} has shape {:?}, gradient {:?}, moments {:?}",
                p.shape(),
                g.shape(),
                state.first[i].shape()
            )));
        }
    }
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        for (((w, &gk), mk), vk) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mk = beta1 * *mk + (1.0 - beta1) * gk;
            *vk = beta2 * *vk + (1.0 - beta2) * gk * gk;
            let m_hat = *mk / c1;
            let v_hat = *vk / c2;
            *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut w = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = w.clone();
        let g = Tensor::zeros(&[3]);
        let mut state = AdamState::new(AdamConfig::default(), [&w]);
        for _ in 0..100 {
            adam_step(&mut [&mut w], &[&g], &mut state).unwrap();
        }
        assert_eq!(w, before);
        assert_eq!(state.step, 100);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        let mut w = Tensor::zeros(&[3]);
        let g = Tensor::from_vec(&[3], vec![0.3, -5.0, 1e-3]).unwrap();
        let mut state = AdamState::new(cfg, [&w]);
        adam_step(&mut [&mut w], &[&g], &mut state).unwrap();
        for (wi, gi) in w.data().iter().zip(g.data()) {
            // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
            let want = -cfg.learning_rate * gi / (gi.abs() + cfg.epsilon);
            assert!((wi - want).abs() < 1e-15);
            assert!((wi.abs() - cfg.learning_rate).abs() < 1e-7);
        }
    }

    #[test]
    fn tensors_update_independently() {
        let cfg = AdamConfig::default();
        let mut a = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let mut b = Tensor::from_vec(&[1, 3], vec![-1.0, 0.0, 4.0]).unwrap();
        let (mut a2, mut b2) = (a.clone(), b.clone());
        let mut fused = AdamState::new(cfg, [&a, &b]);
        let mut sa = AdamState::new(cfg, [&a2]);
        let mut sb = AdamState::new(cfg, [&b2]);
        for step in 0..5 {
            let s = step as f64;
            let ga = Tensor::from_vec(&[2], vec![0.1 * s, -0.3]).unwrap();
            let gb = Tensor::from_vec(&[1, 3], vec![s, 2.0, -0.5 * s]).unwrap();
            adam_step(&mut [&mut a, &mut b], &[&ga, &gb], &mut fused).unwrap();
            adam_step(&mut [&mut a2], &[&ga], &mut sa).unwrap();
            adam_step(&mut [&mut b2], &[&gb], &mut sb).unwrap();
        }
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut w = Tensor::zeros(&[3]);
        let g = Tensor::zeros(&[4]);
        let mut state = AdamState::new(AdamConfig::default(), [&w]);
        assert!(adam_step(&mut [&mut w], &[&g], &mut state).is_err());
        assert_eq!(state.step, 0);
    }
}
