//! Adam with bias correction, bound to one network's tensor layout.

use serde::{Deserialize, Serialize};

use super::Parameterized;
use crate::error::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment buffers are allocated lazily on the first step and keyed by tensor
/// position, so an optimizer must stay paired with the network it was first
/// stepped on.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update from accumulated gradients, then zero them.
    /// Trips the NaN guard before touching any parameter.
    pub fn step<N: Parameterized>(&mut self, net: &mut N) -> Result<()> {
        net.check_finite()?;
        if self.m.is_empty() {
            for i in 0..net.num_tensors() {
                let n = net.tensor(i).len();
                self.m.push(vec![0.0; n]);
                self.v.push(vec![0.0; n]);
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for i in 0..net.num_tensors() {
            let tensor = net.tensor_mut(i);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..tensor.values.len() {
                let g = tensor.grad[j];
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                tensor.values[j] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                tensor.grad[j] = 0.0;
            }
        }
        Ok(())
    }
}

/// Clip the global gradient norm across all tensors to `max_norm`.
pub fn clip_grad_norm<N: Parameterized>(net: &mut N, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for i in 0..net.num_tensors() {
        for g in &net.tensor(i).grad {
            sq += g * g;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for i in 0..net.num_tensors() {
            for g in net.tensor_mut(i).grad.iter_mut() {
                *g *= scale;
            }
        }
    }
    norm
}
