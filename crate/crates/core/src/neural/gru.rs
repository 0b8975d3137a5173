//! Single-layer GRU encoder with explicit backpropagation through time.
//!
//! The final hidden state is the output; dropout (inverted, training mode
//! only) applies to that output vector, not to the recurrent connections.
//! Per-step activations are stored in flat step-major buffers so a forward
//! pass costs a handful of allocations rather than hundreds.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{sigmoid, ParamTensor, Parameterized};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GruSpec {
    pub input_size: usize,
    pub hidden_size: usize,
    pub dropout_rate: f64,
}

impl GruSpec {
    pub fn new(input_size: usize, hidden_size: usize, dropout_rate: f64) -> Self {
        assert!((0.0..1.0).contains(&dropout_rate));
        Self { input_size, hidden_size, dropout_rate }
    }
}

/// Gates: update `z`, reset `r`, candidate `n`:
///   z_t = sigma(Wz x_t + Uz h_{t-1} + bz)
///   r_t = sigma(Wr x_t + Ur h_{t-1} + br)
///   n_t = tanh(Wn x_t + Un (r_t * h_{t-1}) + bn)
///   h_t = (1 - z_t) * n_t + z_t * h_{t-1}
#[derive(Debug, Clone)]
pub struct Gru {
    pub spec: GruSpec,
    tensors: Vec<ParamTensor>, // wz uz bz wr ur br wn un bn
}

const WZ: usize = 0;
const UZ: usize = 1;
const BZ: usize = 2;
const WR: usize = 3;
const UR: usize = 4;
const BR: usize = 5;
const WN: usize = 6;
const UN: usize = 7;
const BN: usize = 8;

/// Step-major activation record: `hs` holds h_0..h_T, the gate buffers hold
/// one row per step.
#[derive(Debug, Clone)]
pub struct GruCache {
    steps: usize,
    xs: Vec<f64>,
    hs: Vec<f64>,
    zs: Vec<f64>,
    rs: Vec<f64>,
    ns: Vec<f64>,
    mask: Option<Vec<f64>>,
}

impl Gru {
    pub fn new(name: &str, spec: GruSpec, gain: f64, rng: &mut ChaCha8Rng) -> Self {
        let (i, h) = (spec.input_size, spec.hidden_size);
        let mut t = Vec::new();
        for (label, rows, cols) in [
            ("wz", h, i),
            ("uz", h, h),
            ("bz", h, 1),
            ("wr", h, i),
            ("ur", h, h),
            ("br", h, 1),
            ("wn", h, i),
            ("un", h, h),
            ("bn", h, 1),
        ] {
            if cols == 1 {
                t.push(ParamTensor::zeros(&format!("{name}.{label}"), rows, 1));
            } else {
                t.push(ParamTensor::uniform(&format!("{name}.{label}"), rows, cols, gain, rng));
            }
        }
        Self { spec, tensors: t }
    }

    /// Inverted-dropout mask for the output vector; pass to `forward` in
    /// training mode and reuse the same mask when re-running a step.
    pub fn sample_dropout_mask(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let p = self.spec.dropout_rate;
        (0..self.spec.hidden_size)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) })
            .collect()
    }

    /// Encode a flattened `steps x input_size` sequence; returns the final
    /// hidden state (masked when `dropout_mask` is given) plus the cache.
    pub fn forward(&self, seq: &[f64], dropout_mask: Option<&[f64]>) -> Result<(Vec<f64>, GruCache)> {
        let i = self.spec.input_size;
        let h = self.spec.hidden_size;
        if seq.is_empty() || seq.len() % i != 0 {
            return Err(Error::Shape(format!(
                "gru sequence length {} is not a multiple of input size {i}",
                seq.len()
            )));
        }
        let steps = seq.len() / i;
        let mut cache = GruCache {
            steps,
            xs: seq.to_vec(),
            hs: vec![0.0; (steps + 1) * h],
            zs: vec![0.0; steps * h],
            rs: vec![0.0; steps * h],
            ns: vec![0.0; steps * h],
            mask: dropout_mask.map(|m| m.to_vec()),
        };
        let mut az = vec![0.0; h];
        let mut ar = vec![0.0; h];
        let mut an = vec![0.0; h];
        let mut gated = vec![0.0; h];

        for t in 0..steps {
            let x = &seq[t * i..(t + 1) * i];
            let (prev, rest) = cache.hs.split_at_mut((t + 1) * h);
            let h_prev = &prev[t * h..];
            let h_new = &mut rest[..h];

            az.copy_from_slice(&self.tensors[BZ].values);
            self.tensors[WZ].matvec_into(x, &mut az);
            self.tensors[UZ].matvec_into(h_prev, &mut az);
            ar.copy_from_slice(&self.tensors[BR].values);
            self.tensors[WR].matvec_into(x, &mut ar);
            self.tensors[UR].matvec_into(h_prev, &mut ar);

            let z = &mut cache.zs[t * h..(t + 1) * h];
            let r = &mut cache.rs[t * h..(t + 1) * h];
            for k in 0..h {
                z[k] = sigmoid(az[k]);
                r[k] = sigmoid(ar[k]);
                gated[k] = r[k] * h_prev[k];
            }

            an.copy_from_slice(&self.tensors[BN].values);
            self.tensors[WN].matvec_into(x, &mut an);
            self.tensors[UN].matvec_into(&gated, &mut an);
            let n = &mut cache.ns[t * h..(t + 1) * h];
            for k in 0..h {
                n[k] = an[k].tanh();
                h_new[k] = (1.0 - z[k]) * n[k] + z[k] * h_prev[k];
            }
        }

        let mut out = cache.hs[steps * h..].to_vec();
        if let Some(mask) = dropout_mask {
            debug_assert_eq!(mask.len(), h);
            for (o, m) in out.iter_mut().zip(mask) {
                *o *= m;
            }
        }
        Ok((out, cache))
    }

    /// Backpropagate a gradient wrt the (masked) output through all steps,
    /// accumulating parameter gradients. Input gradients are discarded; the
    /// sequence is observation data, not a learnable quantity.
    pub fn backward(&mut self, cache: &GruCache, d_output: &[f64]) {
        let i = self.spec.input_size;
        let h = self.spec.hidden_size;
        let mut dh: Vec<f64> = d_output.to_vec();
        if let Some(mask) = &cache.mask {
            for (d, m) in dh.iter_mut().zip(mask) {
                *d *= m;
            }
        }

        let mut dan = vec![0.0; h];
        let mut daz = vec![0.0; h];
        let mut dar = vec![0.0; h];
        let mut q = vec![0.0; h];
        let mut dh_prev = vec![0.0; h];
        let mut gated = vec![0.0; h];

        for t in (0..cache.steps).rev() {
            let x = &cache.xs[t * i..(t + 1) * i];
            let h_prev = &cache.hs[t * h..(t + 1) * h];
            let z = &cache.zs[t * h..(t + 1) * h];
            let r = &cache.rs[t * h..(t + 1) * h];
            let n = &cache.ns[t * h..(t + 1) * h];

            for k in 0..h {
                let dn = dh[k] * (1.0 - z[k]);
                dan[k] = dn * (1.0 - n[k] * n[k]);
                let dz = dh[k] * (h_prev[k] - n[k]);
                daz[k] = dz * z[k] * (1.0 - z[k]);
                dh_prev[k] = dh[k] * z[k];
            }

            // Through the candidate's gated recurrent term.
            q.fill(0.0);
            self.tensors[UN].matvec_transpose_into(&dan, &mut q);
            for k in 0..h {
                let dr = q[k] * h_prev[k];
                dar[k] = dr * r[k] * (1.0 - r[k]);
                dh_prev[k] += q[k] * r[k];
                gated[k] = r[k] * h_prev[k];
            }

            self.tensors[UZ].matvec_transpose_into(&daz, &mut dh_prev);
            self.tensors[UR].matvec_transpose_into(&dar, &mut dh_prev);

            self.tensors[WZ].accumulate_outer(&daz, x);
            self.tensors[UZ].accumulate_outer(&daz, h_prev);
            self.tensors[BZ].accumulate_bias(&daz);
            self.tensors[WR].accumulate_outer(&dar, x);
            self.tensors[UR].accumulate_outer(&dar, h_prev);
            self.tensors[BR].accumulate_bias(&dar);
            self.tensors[WN].accumulate_outer(&dan, x);
            self.tensors[UN].accumulate_outer(&dan, &gated);
            self.tensors[BN].accumulate_bias(&dan);

            std::mem::swap(&mut dh, &mut dh_prev);
        }
    }
}

impl Parameterized for Gru {
    fn num_tensors(&self) -> usize {
        self.tensors.len()
    }

    fn tensor(&self, i: usize) -> &ParamTensor {
        &self.tensors[i]
    }

    fn tensor_mut(&mut self, i: usize) -> &mut ParamTensor {
        &mut self.tensors[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn zero_weights_give_zero_hidden() {
        let mut g = Gru::new("g", GruSpec::new(3, 4, 0.0), 1.0, &mut rng());
        for i in 0..g.num_tensors() {
            for v in g.tensor_mut(i).values.iter_mut() {
                *v = 0.0;
            }
        }
        let seq = vec![0.7; 3 * 5];
        let (out, _) = g.forward(&seq, None).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_width_is_hidden_size_for_any_horizon() {
        let g = Gru::new("g", GruSpec::new(2, 5, 0.0), 1.0, &mut rng());
        for steps in [1usize, 7, 24] {
            let seq = vec![0.1; 2 * steps];
            let (out, _) = g.forward(&seq, None).unwrap();
            assert_eq!(out.len(), 5);
        }
    }

    #[test]
    fn eval_mode_ignores_dropout_rate() {
        let g015 = Gru::new("g", GruSpec::new(2, 4, 0.15), 1.0, &mut rng());
        let g000 = Gru::new("g", GruSpec::new(2, 4, 0.0), 1.0, &mut rng());
        let seq = vec![0.3, -0.2, 0.9, 0.1, -0.5, 0.4];
        let (a, _) = g015.forward(&seq, None).unwrap();
        let (b, _) = g000.forward(&seq, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_mask_scales_output_and_is_honored_in_eval_comparison() {
        let g = Gru::new("g", GruSpec::new(2, 4, 0.5), 1.0, &mut rng());
        let seq = vec![0.3, -0.2, 0.9, 0.1];
        let (plain, _) = g.forward(&seq, None).unwrap();
        let mask = vec![2.0, 0.0, 2.0, 0.0];
        let (masked, _) = g.forward(&seq, Some(&mask)).unwrap();
        assert_eq!(masked[0], plain[0] * 2.0);
        assert_eq!(masked[1], 0.0);
    }

    #[test]
    fn empty_or_ragged_sequence_is_shape_error() {
        let g = Gru::new("g", GruSpec::new(3, 4, 0.0), 1.0, &mut rng());
        assert!(g.forward(&[], None).is_err());
        assert!(g.forward(&[1.0, 2.0], None).is_err());
    }
}
