//! Discrete soft actor-critic: twin action-value critics with Polyak-averaged
//! targets, a categorical actor trained against the minimum critic, and a
//! temperature tuned toward a target entropy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::nets::{HeadNet, ObsLayout};
use super::{TrainLog, UpdateRecord};
use crate::env::Environment;
use crate::error::Result;
use crate::neural::{clip_grad_norm, Adam, AdamConfig, Categorical, Parameterized};

#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub lr: f64,
    pub gamma: f64,
    pub buffer: usize,
    pub batch: usize,
    pub total_steps: u64,
    /// Polyak coefficient: target <- tau * online + (1 - tau) * target.
    pub tau: f64,
    /// Target entropy as a fraction of log |A|.
    pub target_entropy_scale: f64,
    pub gru_dropout: f64,
    pub learning_starts: usize,
    pub update_every: u64,
    pub alpha_init: f64,
    pub grad_clip: f64,
    pub hidden: usize,
    pub gru_hidden: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            gamma: 0.99,
            buffer: 4_000,
            batch: 256,
            total_steps: 1_000_000,
            tau: 0.005,
            target_entropy_scale: 0.5,
            gru_dropout: 0.10,
            learning_starts: 500,
            update_every: 1,
            alpha_init: 1.0,
            grad_clip: 10.0,
            hidden: 64,
            gru_hidden: 32,
        }
    }
}

/// Soft state value under the current policy:
/// `sum_a pi(a) * (min(q1, q2)(a) - alpha * log pi(a))`.
pub fn sac_soft_value(probs: &[f64], q1: &[f64], q2: &[f64], alpha: f64) -> f64 {
    debug_assert!(probs.len() == q1.len() && q1.len() == q2.len());
    probs
        .iter()
        .zip(q1.iter().zip(q2))
        .map(|(p, (a, b))| {
            if *p > 0.0 {
                p * (a.min(*b) - alpha * p.ln())
            } else {
                0.0
            }
        })
        .sum()
}

/// Actor objective (to minimize):
/// `sum_a pi(a) * (alpha * log pi(a) - min(q1, q2)(a))`.
pub fn sac_actor_loss(probs: &[f64], q1: &[f64], q2: &[f64], alpha: f64) -> f64 {
    probs
        .iter()
        .zip(q1.iter().zip(q2))
        .map(|(p, (a, b))| {
            if *p > 0.0 {
                p * (alpha * p.ln() - a.min(*b))
            } else {
                0.0
            }
        })
        .sum()
}

/// Gradient of the actor loss wrt the logits, with the critic values held
/// constant: `d/dz_k = pi_k * (c_k - L)` where `c_a = alpha log pi_a - m_a`.
fn actor_loss_grad_logits(dist: &Categorical, q_min: &[f64], alpha: f64) -> (f64, Vec<f64>) {
    let costs: Vec<f64> = dist
        .probs
        .iter()
        .zip(&dist.log_probs)
        .zip(q_min)
        .map(|((_, lp), m)| alpha * lp - m)
        .collect();
    let loss: f64 = dist.probs.iter().zip(&costs).map(|(p, c)| p * c).sum();
    let grad: Vec<f64> = dist.probs.iter().zip(&costs).map(|(p, c)| p * (c - loss)).collect();
    (loss, grad)
}

#[derive(Debug, Clone)]
struct Transition {
    obs: Vec<f64>,
    action: usize,
    reward: f64,
    next_obs: Vec<f64>,
    done: bool,
}

/// Actor, twin critics, their targets, and the temperature.
#[derive(Debug)]
pub struct SacNets {
    pub actor: HeadNet,
    pub q1: HeadNet,
    pub q2: HeadNet,
    pub q1_target: HeadNet,
    pub q2_target: HeadNet,
    pub log_alpha: f64,
}

impl SacNets {
    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }
}

/// Train discrete SAC on any discrete-action environment.
pub fn train_sac(
    env: &mut dyn Environment,
    layout: ObsLayout,
    config: &SacConfig,
    seed: u64,
) -> Result<(SacNets, TrainLog)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = env.n_actions();
    let h = config.hidden;
    let g = config.gru_hidden;
    let actor = HeadNet::new("actor", layout, h, g, config.gru_dropout, k, 0.01, &mut rng);
    let q1 = HeadNet::new("q1", layout, h, g, config.gru_dropout, k, 1.0, &mut rng);
    let q2 = HeadNet::new("q2", layout, h, g, config.gru_dropout, k, 1.0, &mut rng);
    let mut nets = SacNets {
        q1_target: q1.clone(),
        q2_target: q2.clone(),
        actor,
        q1,
        q2,
        log_alpha: config.alpha_init.ln(),
    };
    let target_entropy = config.target_entropy_scale * (k as f64).ln();

    let mut actor_opt = Adam::new(AdamConfig::with_lr(config.lr));
    let mut q1_opt = Adam::new(AdamConfig::with_lr(config.lr));
    let mut q2_opt = Adam::new(AdamConfig::with_lr(config.lr));

    let mut buffer: Vec<Transition> = Vec::with_capacity(config.buffer);
    let mut head = 0usize;
    let mut log = TrainLog::default();
    let mut obs = env.reset();
    let mut episode_return = 0.0;
    let mut update: u64 = 0;
    let mut critic_loss_acc = 0.0;
    let mut entropy_acc = 0.0;
    let mut acc_count = 0u64;

    for step in 0..config.total_steps {
        let mask = nets.actor.core.sample_dropout_mask(&mut rng);
        let (logits, _) = nets.actor.forward(&obs, mask.as_deref())?;
        let dist = Categorical::from_logits(&logits)?;
        let action = dist.sample(&mut rng);
        let out = env.step(action);
        episode_return += out.reward;
        let t = Transition {
            obs: std::mem::take(&mut obs),
            action,
            reward: out.reward,
            next_obs: out.obs.clone(),
            done: out.done,
        };
        if buffer.len() < config.buffer {
            buffer.push(t);
        } else {
            buffer[head] = t;
            head = (head + 1) % config.buffer;
        }
        if out.done {
            log.push_episode(step + 1, episode_return);
            episode_return = 0.0;
            obs = env.reset();
        } else {
            obs = out.obs;
        }

        if buffer.len() >= config.learning_starts.max(config.batch)
            && (step + 1) % config.update_every == 0
        {
            let alpha = nets.alpha();
            let b = config.batch as f64;
            let mut critic_loss = 0.0;
            let mut batch_entropy = 0.0;

            let picks: Vec<usize> =
                (0..config.batch).map(|_| rng.gen_range(0..buffer.len())).collect();

            // Critic regression onto the soft target.
            for &i in &picks {
                let t = &buffer[i];
                let y = if t.done {
                    t.reward
                } else {
                    let (next_logits, _) = nets.actor.forward(&t.next_obs, None)?;
                    let next_dist = Categorical::from_logits(&next_logits)?;
                    let (q1t, _) = nets.q1_target.forward(&t.next_obs, None)?;
                    let (q2t, _) = nets.q2_target.forward(&t.next_obs, None)?;
                    t.reward + config.gamma * sac_soft_value(&next_dist.probs, &q1t, &q2t, alpha)
                };
                let (q1v, c1) = nets.q1.forward(&t.obs, None)?;
                let (q2v, c2) = nets.q2.forward(&t.obs, None)?;
                let (e1, e2) = (q1v[t.action] - y, q2v[t.action] - y);
                critic_loss += (e1 * e1 + e2 * e2) / b;
                let mut d1 = vec![0.0; k];
                d1[t.action] = 2.0 * e1 / b;
                nets.q1.backward(&c1, &d1);
                let mut d2 = vec![0.0; k];
                d2[t.action] = 2.0 * e2 / b;
                nets.q2.backward(&c2, &d2);
            }
            clip_grad_norm(&mut nets.q1, config.grad_clip);
            clip_grad_norm(&mut nets.q2, config.grad_clip);
            q1_opt.step(&mut nets.q1)?;
            q2_opt.step(&mut nets.q2)?;

            // Actor against the refreshed online critics.
            for &i in &picks {
                let t = &buffer[i];
                let mask = nets.actor.core.sample_dropout_mask(&mut rng);
                let (logits, cache) = nets.actor.forward(&t.obs, mask.as_deref())?;
                let dist = Categorical::from_logits(&logits)?;
                let (q1v, _) = nets.q1.forward(&t.obs, None)?;
                let (q2v, _) = nets.q2.forward(&t.obs, None)?;
                let q_min: Vec<f64> =
                    q1v.iter().zip(&q2v).map(|(a, b2)| a.min(*b2)).collect();
                let (_, grad) = actor_loss_grad_logits(&dist, &q_min, alpha);
                let scaled: Vec<f64> = grad.iter().map(|g2| g2 / b).collect();
                nets.actor.backward(&cache, &scaled);
                batch_entropy += dist.entropy() / b;
            }
            clip_grad_norm(&mut nets.actor, config.grad_clip);
            actor_opt.step(&mut nets.actor)?;

            // Temperature follows the entropy gap.
            nets.log_alpha -= config.lr * alpha * (batch_entropy - target_entropy);

            // Polyak-averaged targets.
            nets.q1_target.polyak_from(&nets.q1, config.tau);
            nets.q2_target.polyak_from(&nets.q2, config.tau);

            update += 1;
            critic_loss_acc += critic_loss;
            entropy_acc += batch_entropy;
            acc_count += 1;
        }

        if (step + 1) % 1000 == 0 {
            let mut record = UpdateRecord::at(step + 1, update);
            record.alpha = Some(nets.alpha());
            if acc_count > 0 {
                record.loss = Some(critic_loss_acc / acc_count as f64);
                record.entropy = Some(entropy_acc / acc_count as f64);
            }
            log.push_update(record);
            critic_loss_acc = 0.0;
            entropy_acc = 0.0;
            acc_count = 0;
        }
    }
    Ok((nets, log))
}
