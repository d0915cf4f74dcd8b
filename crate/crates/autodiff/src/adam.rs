//! Adaptive-moment optimizer with global gradient-norm clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the gradient when its global ℓ₂ norm exceeds this value.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: Some(1.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// Apply one update in place and return the (pre-clipping) gradient norm.
pub fn adam_step(store: &mut ParamStore, grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<f64> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::ShapeMismatch { op: "adam_step", lhs: vec![store.len()], rhs: vec![grads.len()] });
    }
    for (g, (_, _, p)) in grads.iter().zip(store.iter()) {
        if g.shape() != p.shape() {
            return Err(Error::ShapeMismatch { op: "adam_step", lhs: p.shape().to_vec(), rhs: g.shape().to_vec() });
        }
    }
    let norm = grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
    let scale = match cfg.clip_norm {
        Some(c) if norm > c => c / norm,
        _ => 1.0,
    };
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for (i, p) in store.values_mut().iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((w, &g), mk), vk) in p.data_mut().iter_mut().zip(grads[i].data()).zip(m.data_mut()).zip(v.data_mut()) {
            let g = g * scale;
            *mk = cfg.beta1 * *mk + (1.0 - cfg.beta1) * g;
            *vk = cfg.beta2 * *vk + (1.0 - cfg.beta2) * g * g;
            *w -= cfg.lr * (*mk / bc1) / ((*vk / bc2).sqrt() + cfg.eps);
        }
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_param(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::vector(vec![v])).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = one_param(2.0);
        let mut st = AdamState::new(&s);
        adam_step(&mut s, &[Tensor::vector(vec![0.0])], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(s.get(s.id("w").unwrap()).item(), 2.0);
        assert_eq!((st.m[0].item(), st.v[0].item()), (0.0, 0.0));

        // Existing moments decay geometrically under zero gradients.
        st.m[0].data_mut()[0] = 0.5;
        st.v[0].data_mut()[0] = 0.25;
        adam_step(&mut s, &[Tensor::vector(vec![0.0])], &mut st, &AdamConfig::default()).unwrap();
        assert_abs_diff_eq!(st.m[0].item(), 0.45, epsilon = 1e-15);
        assert_abs_diff_eq!(st.v[0].item(), 0.24975, epsilon = 1e-15);
    }

    #[test]
    fn first_step_bias_correction() {
        let cfg = AdamConfig { clip_norm: None, ..Default::default() };
        for g in [0.3, -5.0, 1e-4] {
            let mut s = one_param(0.0);
            let mut st = AdamState::new(&s);
            adam_step(&mut s, &[Tensor::vector(vec![g])], &mut st, &cfg).unwrap();
            assert_abs_diff_eq!(s.get(s.id("w").unwrap()).item(), -cfg.lr * g / (g.abs() + cfg.eps), epsilon = 1e-9);
        }
    }

    #[test]
    fn constant_gradient_gives_lr_sized_steps() {
        let cfg = AdamConfig { clip_norm: None, ..Default::default() };
        let mut s = one_param(0.0);
        let mut st = AdamState::new(&s);
        let mut prev = 0.0;
        for _ in 0..2000 {
            adam_step(&mut s, &[Tensor::vector(vec![0.7])], &mut st, &cfg).unwrap();
            let w = s.get(s.id("w").unwrap()).item();
            assert_abs_diff_eq!(prev - w, cfg.lr, epsilon = 1e-6);
            prev = w;
        }
    }

    #[test]
    fn clipping_and_shape_checks() {
        let mut s = one_param(0.0);
        let mut st = AdamState::new(&s);
        let n = adam_step(&mut s, &[Tensor::vector(vec![10.0])], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(n, 10.0);
        assert!(adam_step(&mut s, &[Tensor::vector(vec![1.0, 2.0])], &mut st, &AdamConfig::default()).is_err());
    }
}
