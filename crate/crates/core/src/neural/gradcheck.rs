//! Central finite-difference verification of every backward pass.

use super::Parameterized;

const FD_STEP: f64 = 1e-5;
const REL_EPS: f64 = 1e-10;

/// Compare analytic gradients against central finite differences.
///
/// `loss` must be deterministic, run a full forward pass, accumulate
/// gradients into the network, and return the scalar loss. Gradients are
/// zeroed before each evaluation here, so the closure can simply accumulate.
/// Returns the maximum relative error |a - n| / (|a| + |n| + 1e-10).
pub fn grad_check<N, F>(net: &mut N, mut loss: F) -> f64
where
    N: Parameterized,
    F: FnMut(&mut N) -> f64,
{
    net.zero_grads();
    let _ = loss(net);
    let analytic: Vec<Vec<f64>> = (0..net.num_tensors())
        .map(|i| net.tensor(i).grad.clone())
        .collect();
    net.zero_grads();

    let mut max_rel = 0.0f64;
    for i in 0..net.num_tensors() {
        for j in 0..net.tensor(i).len() {
            let orig = net.tensor(i).values[j];
            net.tensor_mut(i).values[j] = orig + FD_STEP;
            net.zero_grads();
            let plus = loss(net);
            net.tensor_mut(i).values[j] = orig - FD_STEP;
            net.zero_grads();
            let minus = loss(net);
            net.tensor_mut(i).values[j] = orig;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[i][j];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + REL_EPS);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    net.zero_grads();
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Gru, GruSpec, Mlp, MlpSpec, ParamTensor, Parameterized};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Scalar {
        w: ParamTensor,
    }

    impl Parameterized for Scalar {
        fn num_tensors(&self) -> usize {
            1
        }
        fn tensor(&self, _: usize) -> &ParamTensor {
            &self.w
        }
        fn tensor_mut(&mut self, _: usize) -> &mut ParamTensor {
            &mut self.w
        }
    }

    #[test]
    fn square_function_matches_closed_form() {
        // f(w) = w^2 at w = 3: analytic gradient 6.
        let mut s = Scalar { w: ParamTensor::zeros("w", 1, 1) };
        s.w.values[0] = 3.0;
        let err = grad_check(&mut s, |net| {
            let w = net.w.values[0];
            net.w.grad[0] += 2.0 * w;
            w * w
        });
        assert!(err < 1e-8, "rel err {err}");
    }

    #[test]
    fn random_two_layer_mlp_backward() {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut net = Mlp::new("m", MlpSpec::new(&[4, 6, 3], false), 2.0f64.sqrt(), &mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let target: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let err = grad_check(&mut net, |net| {
                let (out, cache) = net.forward(&x).unwrap();
                let d: Vec<f64> = out.iter().zip(&target).map(|(o, t)| 2.0 * (o - t)).collect();
                net.backward(&cache, &d);
                out.iter().zip(&target).map(|(o, t)| (o - t) * (o - t)).sum()
            });
            assert!(err < 1e-4, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn gru_mlp_composite_over_24_steps() {
        for seed in 0..3u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let gru = Gru::new("g", GruSpec::new(2, 5, 0.0), 1.0, &mut rng);
            let head = Mlp::new("h", MlpSpec::new(&[5, 4, 1], false), 1.0, &mut rng);
            let seq: Vec<f64> = (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect();

            struct Composite {
                gru: Gru,
                head: Mlp,
            }
            impl Parameterized for Composite {
                fn num_tensors(&self) -> usize {
                    self.gru.num_tensors() + self.head.num_tensors()
                }
                fn tensor(&self, i: usize) -> &ParamTensor {
                    let n = self.gru.num_tensors();
                    if i < n {
                        self.gru.tensor(i)
                    } else {
                        self.head.tensor(i - n)
                    }
                }
                fn tensor_mut(&mut self, i: usize) -> &mut ParamTensor {
                    let n = self.gru.num_tensors();
                    if i < n {
                        self.gru.tensor_mut(i)
                    } else {
                        self.head.tensor_mut(i - n)
                    }
                }
            }

            let mut net = Composite { gru, head };
            let err = grad_check(&mut net, |net| {
                let (h, gcache) = net.gru.forward(&seq, None).unwrap();
                let (out, mcache) = net.head.forward(&h).unwrap();
                let dh = net.head.backward(&mcache, &[2.0 * out[0]]);
                net.gru.backward(&gcache, &dh);
                out[0] * out[0]
            });
            assert!(err < 1e-4, "seed {seed}: rel err {err}");
        }
    }
}
