//! Categorical action distribution over logits.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Softmax distribution with cached probabilities and log-probabilities.
#[derive(Debug, Clone)]
pub struct Categorical {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl Categorical {
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.len() < 2 {
            return Err(Error::Shape("categorical head needs at least 2 logits".into()));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numerics("non-finite logits in categorical head".into()));
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let log_sum = sum.ln();
        let probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        let log_probs: Vec<f64> = logits.iter().map(|&l| (l - max) - log_sum).collect();
        Ok(Self { probs, log_probs })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..self.probs.len() {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .zip(&self.log_probs)
            .map(|(p, lp)| if *p > 0.0 { p * lp } else { 0.0 })
            .sum::<f64>()
    }

    /// KL(self || other), both distributions over the same support.
    pub fn kl(&self, other: &Categorical) -> f64 {
        self.probs
            .iter()
            .zip(&self.log_probs)
            .zip(&other.log_probs)
            .map(|((p, lp), lq)| if *p > 0.0 { p * (lp - lq) } else { 0.0 })
            .sum()
    }

    /// d entropy / d logits (closed form for softmax).
    pub fn entropy_grad_logits(&self) -> Vec<f64> {
        let h = self.entropy();
        self.probs
            .iter()
            .zip(&self.log_probs)
            .map(|(p, lp)| -p * (lp + h))
            .collect()
    }

    /// d log pi(action) / d logits = one_hot(action) - probs.
    pub fn log_prob_grad_logits(&self, action: usize) -> Vec<f64> {
        let mut g: Vec<f64> = self.probs.iter().map(|p| -p).collect();
        g[action] += 1.0;
        g
    }
}

/// Sample an action: returns (action, log_prob, entropy).
pub fn categorical_head(logits: &[f64], rng: &mut ChaCha8Rng) -> Result<(usize, f64, f64)> {
    let dist = Categorical::from_logits(logits)?;
    let action = dist.sample(rng);
    Ok((action, dist.log_probs[action], dist.entropy()))
}
