//! Minimal differentiable substrate shared by all agents: dense layers, a
//! single-layer GRU, a categorical policy head, Adam, and a finite-difference
//! gradient checker. Everything is 64-bit and explicitly backpropagated; there
//! is no general autodiff graph.

mod adam;
mod checkpoint;
mod dist;
mod gradcheck;
mod gru;
mod mlp;

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, spec_hash, CheckpointHeader};
pub use dist::{categorical_head, Categorical};
pub use gradcheck::grad_check;
pub use gru::{Gru, GruCache, GruSpec};
pub use mlp::{Mlp, MlpCache, MlpSpec};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A named 2-D parameter block with its gradient accumulator.
///
/// Vectors are stored as `rows x 1`. Gradients accumulate across backward
/// calls and are zeroed by the optimizer step.
#[derive(Debug, Clone)]
pub struct ParamTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl ParamTensor {
    pub fn zeros(name: &str, rows: usize, cols: usize) -> Self {
        Self {
            name: name.to_string(),
            rows,
            cols,
            values: vec![0.0; rows * cols],
            grad: vec![0.0; rows * cols],
        }
    }

    /// Scaled uniform init: bound = gain * sqrt(6 / (fan_in + fan_out)).
    pub fn uniform(name: &str, rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Self {
        let bound = gain * (6.0 / (rows + cols) as f64).sqrt();
        let mut t = Self::zeros(name, rows, cols);
        for v in t.values.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        t
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scale_values(&mut self, factor: f64) {
        for v in self.values.iter_mut() {
            *v *= factor;
        }
    }

    /// y += W x  (W is rows x cols, x has cols entries, y has rows entries)
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for r in 0..self.rows {
            let row = &self.values[r * self.cols..(r + 1) * self.cols];
            y[r] += dot(row, x);
        }
    }

    /// y += W^T d  (back-propagates through `matvec_into`)
    pub fn matvec_transpose_into(&self, d: &[f64], y: &mut [f64]) {
        debug_assert_eq!(d.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for r in 0..self.rows {
            let row = &self.values[r * self.cols..(r + 1) * self.cols];
            let dv = d[r];
            for (c, w) in row.iter().enumerate() {
                y[c] += w * dv;
            }
        }
    }

    /// grad += d x^T (outer product accumulation)
    pub fn accumulate_outer(&mut self, d: &[f64], x: &[f64]) {
        debug_assert_eq!(d.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for r in 0..self.rows {
            let row = &mut self.grad[r * self.cols..(r + 1) * self.cols];
            let dv = d[r];
            for (g, xv) in row.iter_mut().zip(x) {
                *g += dv * xv;
            }
        }
    }

    pub fn accumulate_bias(&mut self, d: &[f64]) {
        debug_assert_eq!(d.len(), self.grad.len());
        for (g, dv) in self.grad.iter_mut().zip(d) {
            *g += dv;
        }
    }
}

/// Indexed access to a network's parameter tensors, in a fixed declaration
/// order. The order defines the checkpoint layout and the optimizer slot
/// assignment, so it must be stable.
pub trait Parameterized {
    fn num_tensors(&self) -> usize;
    fn tensor(&self, i: usize) -> &ParamTensor;
    fn tensor_mut(&mut self, i: usize) -> &mut ParamTensor;

    fn zero_grads(&mut self) {
        for i in 0..self.num_tensors() {
            for g in self.tensor_mut(i).grad.iter_mut() {
                *g = 0.0;
            }
        }
    }

    fn param_count(&self) -> usize {
        (0..self.num_tensors()).map(|i| self.tensor(i).len()).sum()
    }

    /// Hard copy of another network's values (shapes must match).
    fn copy_values_from(&mut self, other: &Self) {
        assert_eq!(self.num_tensors(), other.num_tensors());
        for i in 0..self.num_tensors() {
            let src = other.tensor(i).values.clone();
            self.tensor_mut(i).values.copy_from_slice(&src);
        }
    }

    /// Polyak update: self <- tau * other + (1 - tau) * self.
    fn polyak_from(&mut self, other: &Self, tau: f64) {
        assert_eq!(self.num_tensors(), other.num_tensors());
        for i in 0..self.num_tensors() {
            let src = other.tensor(i).values.clone();
            for (t, o) in self.tensor_mut(i).values.iter_mut().zip(src) {
                *t = tau * o + (1.0 - tau) * *t;
            }
        }
    }

    /// Guard: trip on the first non-finite parameter or gradient.
    fn check_finite(&self) -> Result<()> {
        for i in 0..self.num_tensors() {
            let t = self.tensor(i);
            if let Some(v) = t.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::Numerics(format!(
                    "non-finite value {v} in parameter {}",
                    t.name
                )));
            }
            if let Some(g) = t.grad.iter().find(|g| !g.is_finite()) {
                return Err(Error::Numerics(format!(
                    "non-finite gradient {g} in parameter {}",
                    t.name
                )));
            }
        }
        Ok(())
    }
}

/// Four-lane unrolled dot product; the independent partial sums let the
/// optimizer keep the FP pipeline full without reassociating a single chain.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..chunks {
        let j = i * 4;
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    (s0 + s1) + (s2 + s3) + tail
}

pub(crate) fn tanh_vec(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = x.tanh();
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn matvec_and_transpose_agree_with_manual() {
        let mut w = ParamTensor::zeros("w", 2, 3);
        w.values = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let x = [1.0, 0.5, -1.0];
        let mut y = vec![0.0; 2];
        w.matvec_into(&x, &mut y);
        assert_eq!(y, vec![1.0 + 1.0 - 3.0, 4.0 + 2.5 - 6.0]);

        let d = [1.0, -1.0];
        let mut back = vec![0.0; 3];
        w.matvec_transpose_into(&d, &mut back);
        assert_eq!(back, vec![1.0 - 4.0, 2.0 - 5.0, 3.0 - 6.0]);
    }

    #[test]
    fn uniform_init_is_deterministic_per_seed() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let ta = ParamTensor::uniform("t", 4, 4, 1.0, &mut a);
        let tb = ParamTensor::uniform("t", 4, 4, 1.0, &mut b);
        assert_eq!(ta.values, tb.values);
    }
}
