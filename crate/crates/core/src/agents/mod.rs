//! Learning agents and baselines sharing the neural substrate: clipped-
//! surrogate policy optimization (fixed clip or adaptive KL penalty),
//! deep Q-learning, discrete soft actor-critic, tabular Q-learning, and a
//! rule-based dispatcher.

mod dqn;
mod nets;
mod ppo;
mod qtable;
mod rule;
mod sac;

pub use dqn::{dqn_target, train_dqn, DqnConfig};
pub use nets::{ActorCritic, HeadNet, ObsLayout, TrunkNet};
pub use ppo::{
    pid_kl_update, ppo_clip_loss, ppo_update, train_ppo, PidKlConfig, PidKlState, PpoConfig,
    TrustRegion, TrustState, UpdateSummary,
};
pub use qtable::{train_qtable, QTable, QTableConfig};
pub use rule::{rule_based_battery, TariffLevels};
pub use sac::{sac_actor_loss, sac_soft_value, train_sac, SacConfig, SacNets};

use serde::{Deserialize, Serialize};

use crate::env::{Environment, StepInfo, StepOutcome};

/// On-policy rollout storage.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn clear(&mut self) {
        self.obs.clear();
        self.actions.clear();
        self.log_probs.clear();
        self.values.clear();
        self.rewards.clear();
        self.dones.clear();
    }
}

/// Generalized advantage estimation. Returns raw (unnormalized) advantages
/// plus returns = advantages + values; `bootstrap_value` continues the value
/// chain when the rollout was truncated mid-episode.
pub fn gae_advantages(
    traj: &Trajectory,
    gamma: f64,
    lambda: f64,
    bootstrap_value: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert!(!traj.is_empty(), "empty trajectory");
    let n = traj.len();
    let mut advantages = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let mask = if traj.dones[t] { 0.0 } else { 1.0 };
        let delta = traj.rewards[t] + gamma * next_value * mask - traj.values[t];
        next_adv = delta + gamma * lambda * mask * next_adv;
        advantages[t] = next_adv;
        next_value = traj.values[t];
    }
    let returns: Vec<f64> = advantages.iter().zip(&traj.values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// One line of the training log; serialized as newline-delimited JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Update(UpdateRecord),
    Episode(EpisodeRecord),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub step: u64,
    pub update: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epoch_kls: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs_run: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_kl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

impl UpdateRecord {
    pub fn at(step: u64, update: u64) -> Self {
        Self {
            step,
            update,
            policy_loss: None,
            value_loss: None,
            entropy: None,
            kl: None,
            epoch_kls: None,
            epochs_run: None,
            c_kl: None,
            epsilon: None,
            alpha: None,
            loss: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub step: u64,
    pub ret: f64,
}

/// Accumulated training log, replayable byte-for-byte.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn push_update(&mut self, u: UpdateRecord) {
        self.records.push(LogRecord::Update(u));
    }

    pub fn push_episode(&mut self, step: u64, ret: f64) {
        self.records.push(LogRecord::Episode(EpisodeRecord { step, ret }));
    }

    pub fn updates(&self) -> impl Iterator<Item = &UpdateRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Update(u) => Some(u),
            _ => None,
        })
    }

    pub fn episodes(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Episode(e) => Some(e),
            _ => None,
        })
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("log record serializes"));
            out.push('\n');
        }
        out
    }
}

/// Two-armed bandit diagnostic environment: a constant observation, two
/// actions, deterministic rewards, one step per episode.
#[derive(Debug, Clone)]
pub struct BanditEnv {
    pub arm_rewards: [f64; 2],
}

impl Default for BanditEnv {
    fn default() -> Self {
        Self { arm_rewards: [1.0, 0.0] }
    }
}

impl Environment for BanditEnv {
    fn obs_dim(&self) -> usize {
        1
    }
    fn n_actions(&self) -> usize {
        2
    }
    fn num_episodes(&self) -> usize {
        1
    }
    fn reset(&mut self) -> Vec<f64> {
        vec![1.0]
    }
    fn reset_to(&mut self, _episode: usize) -> Vec<f64> {
        vec![1.0]
    }
    fn step(&mut self, action: usize) -> StepOutcome {
        StepOutcome {
            obs: vec![1.0],
            reward: self.arm_rewards[action],
            done: true,
            info: StepInfo::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gae_single_terminal_step() {
        let traj = Trajectory {
            obs: vec![vec![0.0]],
            actions: vec![0],
            log_probs: vec![0.0],
            values: vec![0.5],
            rewards: vec![1.0],
            dones: vec![true],
        };
        let (adv, ret) = gae_advantages(&traj, 0.9, 0.95, 0.0);
        assert!((adv[0] - 0.5).abs() < 1e-12);
        assert!((ret[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gae_two_step_discounted_sum() {
        let traj = Trajectory {
            obs: vec![vec![0.0]; 2],
            actions: vec![0; 2],
            log_probs: vec![0.0; 2],
            values: vec![0.0; 2],
            rewards: vec![1.0, 1.0],
            dones: vec![false, true],
        };
        let (adv, _) = gae_advantages(&traj, 0.5, 1.0, 0.0);
        assert!((adv[0] - 1.5).abs() < 1e-12);
        assert!((adv[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_collapses_to_td_residuals() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        for _ in 0..50 {
            let n = rng.gen_range(1..20);
            let traj = Trajectory {
                obs: vec![vec![]; n],
                actions: vec![0; n],
                log_probs: vec![0.0; n],
                values: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                rewards: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                dones: (0..n).map(|i| i == n - 1 || rng.gen_bool(0.1)).collect(),
            };
            let bootstrap = rng.gen_range(-1.0..1.0);
            let gamma = 0.9;
            let (adv, _) = gae_advantages(&traj, gamma, 0.0, bootstrap);
            for t in 0..n {
                let next_v = if t + 1 < n { traj.values[t + 1] } else { bootstrap };
                let mask = if traj.dones[t] { 0.0 } else { 1.0 };
                let td = traj.rewards[t] + gamma * next_v * mask - traj.values[t];
                assert!((adv[t] - td).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn log_serialization_is_stable() {
        let mut log = TrainLog::default();
        let mut u = UpdateRecord::at(10, 1);
        u.policy_loss = Some(-0.25);
        u.kl = Some(0.01);
        log.push_update(u);
        log.push_episode(24, -3.5);
        let a = log.to_ndjson();
        let b = log.to_ndjson();
        assert_eq!(a, b);
        assert!(a.starts_with("{\"kind\":\"update\""));
        assert_eq!(a.lines().count(), 2);
    }
}
