use serde::{Deserialize, Serialize};

use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step_count: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.ids().map(|id| vec![0.0; store.grad(id).len()]).collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// Restores moments and step counter, e.g. from a checkpoint.
    pub fn restore(&mut self, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, step_count: u64) {
        assert_eq!(m.len(), self.m.len());
        assert_eq!(v.len(), self.v.len());
        self.m = m;
        self.v = v;
        self.step_count = step_count;
    }

    /// Applies one update using the gradients accumulated in `store`.
    pub fn step(&mut self, store: &mut ParamStore) {
        assert_eq!(store.len(), self.m.len(), "optimizer built for another store");
        self.step_count += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, (m, v)) in self.m.iter_mut().zip(&mut self.v).enumerate() {
            let (value, grad) = store.value_and_grad_mut(i);
            for (((p, g), m), v) in value.data_mut().iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
