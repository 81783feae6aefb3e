use std::collections::BTreeSet;

use super::{Gradients, ParamId, ParameterStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling applied before each update.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: Some(0.5) }
    }
}

/// What one optimizer step did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    /// Global norm before clipping.
    pub grad_norm: f64,
    /// Scale applied to the gradients (1 when not clipped).
    pub clip_scale: f64,
}

/// Adam with bias correction and global-norm clipping.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    frozen: BTreeSet<ParamId>,
}

impl Adam {
    pub fn new(store: &ParameterStore, config: AdamConfig) -> Adam {
        let zeros = || store.ids().map(|id| {
            let (r, c) = store.get(id).shape();
            Tensor::zeros(r, c)
        });
        Adam { config, m: zeros().collect(), v: zeros().collect(), t: 0, frozen: BTreeSet::new() }
    }

    /// Excludes a parameter from updates and from the clipping norm.
    pub fn freeze(&mut self, id: ParamId) {
        self.frozen.insert(id);
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParameterStore, grads: &Gradients, lr: f64) -> Result<StepInfo> {
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        let active = |id: &ParamId| !self.frozen.contains(id);
        let grad_norm = store
            .ids()
            .filter(active)
            .filter_map(|id| grads.get(id))
            .map(Tensor::sq_norm)
            .sum::<f64>()
            .sqrt();
        let clip_scale = match self.config.clip_norm {
            Some(c) if grad_norm > c => c / grad_norm,
            _ => 1.0,
        };

        self.t += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for id in store.ids().collect::<Vec<_>>() {
            if self.frozen.contains(&id) {
                continue;
            }
            let m = self.m[id.0].data_mut();
            let v = self.v[id.0].data_mut();
            let g = grads.get(id).map(Tensor::data);
            let p = store.get_mut(id).data_mut();
            for k in 0..p.len() {
                let gk = g.map_or(0.0, |g| g[k] * clip_scale);
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(StepInfo { grad_norm, clip_scale })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Graph;

    fn store_with(values: Vec<f64>) -> (ParameterStore, ParamId) {
        let mut s = ParameterStore::new();
        let id = s.add("w", Tensor::vector(values)).unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut store, _) = store_with(vec![0.3, -0.7]);
        let before = store.clone();
        let mut adam = Adam::new(&store, AdamConfig::default());
        let grads = Gradients::empty(1);
        adam.step(&mut store, &grads, 0.01).unwrap();
        assert_eq!(store, before);
    }

    #[test]
    fn large_gradient_clipped_to_half() {
        let (mut store, id) = store_with(vec![0.0, 0.0]);
        let mut g = Graph::new(&store);
        let w = g.param(id);
        let c = g.constant_vector(vec![3.0, 4.0]);
        let loss = g.dot(w, c).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!((grads.global_norm() - 5.0).abs() < 1e-12);
        let mut adam = Adam::new(&store, AdamConfig::default());
        let info = adam.step(&mut store, &grads, 0.1).unwrap();
        assert_eq!(info.grad_norm, 5.0);
        assert!((info.clip_scale * info.grad_norm - 0.5).abs() < 1e-12);
        // First bias-corrected Adam step moves each coordinate by ~lr·sign(g).
        for v in store.get(id).data() {
            assert!((v + 0.1).abs() < 1e-6);
        }
        assert!((adam.m[0].data()[0] - 0.1 * 0.3).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let (mut store, id) = store_with(vec![1.0]);
        let mut g = Graph::new(&store);
        let w = g.param(id);
        let big = g.constant_vector(vec![f64::INFINITY]);
        let loss = g.dot(w, big).unwrap();
        let grads = g.backward(loss).unwrap();
        let mut adam = Adam::new(&store, AdamConfig::default());
        assert!(matches!(adam.step(&mut store, &grads, 0.1), Err(Error::Numeric(_))));
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let (mut store, id) = store_with(vec![1.0]);
        let mut g = Graph::new(&store);
        let w = g.param(id);
        let loss = g.sum(w);
        let grads = g.backward(loss).unwrap();
        let mut adam = Adam::new(&store, AdamConfig::default());
        adam.freeze(id);
        adam.step(&mut store, &grads, 0.1).unwrap();
        assert_eq!(store.get(id).data(), &[1.0]);
    }
}
