//! Deep Q-learning: uniform replay, a hard-synced target network, linear
//! epsilon decay, and squared-error regression onto bootstrapped targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::nets::{HeadNet, ObsLayout};
use super::{TrainLog, UpdateRecord};
use crate::env::Environment;
use crate::error::Result;
use crate::neural::{clip_grad_norm, Adam, AdamConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub lr: f64,
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub buffer: usize,
    pub batch: usize,
    pub total_steps: u64,
    pub target_sync_steps: u64,
    /// Fraction of total steps over which epsilon decays linearly.
    pub eps_decay_fraction: f64,
    pub train_every: u64,
    pub learning_starts: usize,
    pub grad_clip: f64,
    pub hidden: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            lr: 2.5e-4,
            gamma: 0.99,
            eps_start: 1.0,
            eps_end: 0.05,
            buffer: 10_000,
            batch: 128,
            total_steps: 1_000_000,
            target_sync_steps: 500,
            eps_decay_fraction: 0.5,
            train_every: 4,
            learning_starts: 500,
            grad_clip: 10.0,
            hidden: 64,
        }
    }
}

impl DqnConfig {
    pub fn epsilon_at(&self, step: u64) -> f64 {
        let horizon = (self.total_steps as f64 * self.eps_decay_fraction).max(1.0);
        let frac = step as f64 / horizon;
        if frac >= 1.0 {
            self.eps_end
        } else {
            self.eps_start + (self.eps_end - self.eps_start) * frac
        }
    }
}

/// Bootstrapped regression target: the terminal flag masks the tail.
pub fn dqn_target(reward: f64, gamma: f64, next_q_values: &[f64], done: bool) -> f64 {
    if done {
        reward
    } else {
        let max_next = next_q_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        reward + gamma * max_next
    }
}

#[derive(Debug, Clone)]
struct Transition {
    obs: Vec<f64>,
    action: usize,
    reward: f64,
    next_obs: Vec<f64>,
    done: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Default)]
struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    head: usize,
}

impl ReplayBuffer {
    fn new(capacity: usize) -> Self {
        Self { items: Vec::with_capacity(capacity), capacity, head: 0 }
    }

    fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    fn len(&self) -> usize {
        self.items.len()
    }

    fn sample<'a>(&'a self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<&'a Transition> {
        (0..batch).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

/// Train a Q-network on any discrete-action environment.
pub fn train_dqn(
    env: &mut dyn Environment,
    layout: ObsLayout,
    config: &DqnConfig,
    seed: u64,
) -> Result<(HeadNet, TrainLog)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_actions = env.n_actions();
    let mut qnet = HeadNet::new("qnet", layout, config.hidden, 32, 0.0, n_actions, 1.0, &mut rng);
    let mut target = qnet.clone();
    let mut opt = Adam::new(AdamConfig::with_lr(config.lr));
    let mut buffer = ReplayBuffer::new(config.buffer);
    let mut log = TrainLog::default();

    let mut obs = env.reset();
    let mut episode_return = 0.0;
    let mut loss_acc = 0.0;
    let mut loss_count = 0u64;
    let mut update: u64 = 0;

    for step in 0..config.total_steps {
        let eps = config.epsilon_at(step);
        let action = if rng.gen::<f64>() < eps {
            rng.gen_range(0..n_actions)
        } else {
            let (q, _) = qnet.forward(&obs, None)?;
            argmax(&q)
        };
        let out = env.step(action);
        episode_return += out.reward;
        buffer.push(Transition {
            obs: std::mem::take(&mut obs),
            action,
            reward: out.reward,
            next_obs: out.obs.clone(),
            done: out.done,
        });
        if out.done {
            log.push_episode(step + 1, episode_return);
            episode_return = 0.0;
            obs = env.reset();
        } else {
            obs = out.obs;
        }

        if buffer.len() >= config.learning_starts.max(config.batch)
            && (step + 1) % config.train_every == 0
        {
            let batch = buffer.sample(config.batch, &mut rng);
            let mut loss = 0.0;
            let b = batch.len() as f64;
            for t in &batch {
                let (next_q, _) = target.forward(&t.next_obs, None)?;
                let y = dqn_target(t.reward, config.gamma, &next_q, t.done);
                let (q, cache) = qnet.forward(&t.obs, None)?;
                let err = q[t.action] - y;
                loss += err * err / b;
                let mut d_q = vec![0.0; n_actions];
                d_q[t.action] = 2.0 * err / b;
                qnet.backward(&cache, &d_q);
            }
            clip_grad_norm(&mut qnet, config.grad_clip);
            opt.step(&mut qnet)?;
            loss_acc += loss;
            loss_count += 1;
            update += 1;
        }

        if (step + 1) % config.target_sync_steps == 0 {
            use crate::neural::Parameterized;
            target.copy_values_from(&qnet);
        }

        // One log line per sync interval keeps the file size bounded.
        if (step + 1) % 1000 == 0 {
            let mut record = UpdateRecord::at(step + 1, update);
            record.epsilon = Some(eps);
            record.loss = if loss_count > 0 { Some(loss_acc / loss_count as f64) } else { None };
            log.push_update(record);
            loss_acc = 0.0;
            loss_count = 0;
        }
    }
    Ok((qnet, log))
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}
