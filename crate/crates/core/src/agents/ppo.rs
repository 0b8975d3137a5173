//! Clipped-surrogate policy optimization with either a fixed clip plus KL
//! early stopping, or an additive KL penalty whose coefficient a PID
//! controller steers toward a target divergence.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::nets::{ActorCritic, ObsLayout};
use super::{gae_advantages, TrainLog, Trajectory, UpdateRecord};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::neural::{clip_grad_norm, Adam, AdamConfig, Categorical};

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub lr: f64,
    pub gamma: f64,
    /// Clipping half-width for the probability ratio.
    pub clip: f64,
    pub batch: usize,
    pub total_steps: u64,
    pub rollout_len: usize,
    pub epochs: usize,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub grad_clip: f64,
    /// Early-stop threshold for fixed-clip mode (stops at 1.5x this value).
    pub target_kl: f64,
    pub gru_dropout: f64,
    pub hidden: usize,
    pub gru_hidden: usize,
}

impl PpoConfig {
    /// Heater setting: slow learning rate, tight clip, day-scale discount.
    pub fn heater_default() -> Self {
        Self {
            lr: 2.5e-4,
            gamma: 0.99,
            clip: 0.1,
            batch: 128,
            total_steps: 1_000_000,
            rollout_len: 1024,
            epochs: 4,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            value_coef: 0.5,
            grad_clip: 0.5,
            target_kl: 0.015,
            gru_dropout: 0.10,
            hidden: 64,
            gru_hidden: 32,
        }
    }

    /// Battery setting: faster learning rate, wider clip, shorter memory.
    pub fn battery_default() -> Self {
        Self {
            lr: 3e-3,
            gamma: 0.89,
            clip: 0.2,
            batch: 64,
            ..Self::heater_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::Config("clip must lie in (0, 1)".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1]".into()));
        }
        if self.batch == 0 || self.rollout_len == 0 || self.epochs == 0 {
            return Err(Error::Config("batch, rollout_len, and epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Trust-region flavor selected at launch.
#[derive(Debug, Clone, PartialEq)]
pub enum TrustRegion {
    Clip,
    PidKl(PidKlConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PidKlConfig {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub c_init: f64,
    pub target_kl: f64,
}

impl Default for PidKlConfig {
    fn default() -> Self {
        // Gains sized so a sustained 2x overshoot of the target roughly
        // doubles the coefficient within ten epochs.
        Self { kp: 1.0, ki: 0.05, kd: 0.25, c_init: 1.0, target_kl: 0.01 }
    }
}

/// Controller state carried across update epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct PidKlState {
    pub c_kl: f64,
    pub target_kl: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral: f64,
    pub prev_error: f64,
}

impl PidKlState {
    pub fn new(config: &PidKlConfig) -> Self {
        Self {
            c_kl: config.c_init,
            target_kl: config.target_kl,
            kp: config.kp,
            ki: config.ki,
            kd: config.kd,
            integral: 0.0,
            prev_error: 0.0,
        }
    }
}

/// One controller step on the measured divergence; the coefficient is
/// clamped at zero from below.
pub fn pid_kl_update(state: &mut PidKlState, measured_kl: f64) {
    let e = measured_kl - state.target_kl;
    state.integral += e;
    let d = e - state.prev_error;
    state.c_kl = (state.c_kl + state.kp * e + state.ki * state.integral + state.kd * d).max(0.0);
    state.prev_error = e;
}

/// Runtime trust-region state.
#[derive(Debug, Clone, PartialEq)]
pub enum TrustState {
    Clip,
    PidKl(PidKlState),
}

impl TrustState {
    pub fn from_region(region: &TrustRegion) -> Self {
        match region {
            TrustRegion::Clip => TrustState::Clip,
            TrustRegion::PidKl(cfg) => TrustState::PidKl(PidKlState::new(cfg)),
        }
    }

    pub fn c_kl(&self) -> Option<f64> {
        match self {
            TrustState::Clip => None,
            TrustState::PidKl(s) => Some(s.c_kl),
        }
    }
}

/// Pessimistic clipped surrogate, negated for minimization:
/// `-min(ratio * A, clip(ratio, 1-delta, 1+delta) * A)`.
pub fn ppo_clip_loss(ratio: f64, advantage: f64, delta: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - delta, 1.0 + delta);
    -(ratio * advantage).min(clipped * advantage)
}

/// One minibatch sample after advantage computation.
#[derive(Debug, Clone, Copy)]
pub struct PpoSample<'a> {
    pub obs: &'a [f64],
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MinibatchStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
}

/// Forward/backward over one minibatch: accumulates gradients of
///   clipped policy loss + c_kl * KL(old || new) + value_coef * value loss
///   - entropy_coef * entropy
/// and returns the averaged terms. The KL both in the penalty and in the
/// returned estimate is the non-negative `(r - 1) - ln r` estimator.
pub fn ppo_minibatch_loss(
    net: &mut ActorCritic,
    samples: &[PpoSample<'_>],
    config: &PpoConfig,
    c_kl: f64,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<MinibatchStats> {
    let b = samples.len() as f64;
    let mut stats = MinibatchStats::default();
    for s in samples {
        let mask = dropout_rng.as_deref_mut().and_then(|r| net.core.sample_dropout_mask(r));
        let (logits, value, cache) = net.forward(s.obs, mask.as_deref())?;
        let dist = Categorical::from_logits(&logits)?;
        let lp = dist.log_probs[s.action];
        let log_ratio = lp - s.old_log_prob;
        let ratio = log_ratio.exp();

        let clipped = ratio.clamp(1.0 - config.clip, 1.0 + config.clip);
        let surr1 = ratio * s.advantage;
        let surr2 = clipped * s.advantage;
        let (surr, dsurr_dlp) = if surr1 <= surr2 {
            (surr1, s.advantage * ratio)
        } else if ratio > 1.0 - config.clip && ratio < 1.0 + config.clip {
            (surr2, s.advantage * ratio)
        } else {
            (surr2, 0.0)
        };

        let kl = (ratio - 1.0) - log_ratio;
        let entropy = dist.entropy();
        let value_err = value - s.ret;
        let policy_loss = -surr + c_kl * kl;
        let value_loss = 0.5 * value_err * value_err;
        let total = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy;
        if !total.is_finite() {
            return Err(Error::Numerics(format!(
                "non-finite minibatch loss (ratio {ratio}, value {value})"
            )));
        }

        let d_lp = (-dsurr_dlp + c_kl * (ratio - 1.0)) / b;
        let lp_grad = dist.log_prob_grad_logits(s.action);
        let ent_grad = dist.entropy_grad_logits();
        let d_logits: Vec<f64> = lp_grad
            .iter()
            .zip(&ent_grad)
            .map(|(lg, eg)| d_lp * lg - config.entropy_coef / b * eg)
            .collect();
        let d_value = config.value_coef * value_err / b;
        net.backward(&cache, &d_logits, d_value);

        stats.loss += total / b;
        stats.policy_loss += policy_loss / b;
        stats.value_loss += value_loss / b;
        stats.entropy += entropy / b;
        stats.kl += kl / b;
    }
    Ok(stats)
}

#[derive(Debug, Clone)]
pub struct UpdateSummary {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean measured KL per epoch actually run.
    pub epoch_kls: Vec<f64>,
    pub epochs_run: usize,
    pub c_kl: Option<f64>,
}

impl UpdateSummary {
    pub fn final_kl(&self) -> f64 {
        self.epoch_kls.last().copied().unwrap_or(0.0)
    }
}

/// One policy/value update over a collected rollout.
///
/// Advantages are normalized per rollout. Fixed-clip mode stops early once an
/// epoch's measured KL exceeds 1.5x the target; the PID variant instead runs
/// the controller after every epoch and folds `c_kl * KL` into the loss.
pub fn ppo_update(
    net: &mut ActorCritic,
    opt: &mut Adam,
    traj: &Trajectory,
    bootstrap_value: f64,
    config: &PpoConfig,
    trust: &mut TrustState,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateSummary> {
    let (advantages, returns) = gae_advantages(traj, config.gamma, config.gae_lambda, bootstrap_value);
    let n = advantages.len();
    let mean = advantages.iter().sum::<f64>() / n as f64;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt().max(1e-8);
    let normed: Vec<f64> = advantages.iter().map(|a| (a - mean) / std).collect();

    let mut indices: Vec<usize> = (0..n).collect();
    let mut summary = UpdateSummary {
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        epoch_kls: Vec::with_capacity(config.epochs),
        epochs_run: 0,
        c_kl: trust.c_kl(),
    };
    let mut batches_done = 0usize;

    for _epoch in 0..config.epochs {
        indices.shuffle(rng);
        let c_kl = trust.c_kl().unwrap_or(0.0);
        let mut epoch_kl = 0.0;
        let mut epoch_batches = 0usize;
        for chunk in indices.chunks(config.batch) {
            let samples: Vec<PpoSample> = chunk
                .iter()
                .map(|&i| PpoSample {
                    obs: &traj.obs[i],
                    action: traj.actions[i],
                    old_log_prob: traj.log_probs[i],
                    advantage: normed[i],
                    ret: returns[i],
                })
                .collect();
            let stats = ppo_minibatch_loss(net, &samples, config, c_kl, Some(rng))?;
            clip_grad_norm(net, config.grad_clip);
            opt.step(net)?;

            summary.policy_loss += stats.policy_loss;
            summary.value_loss += stats.value_loss;
            summary.entropy += stats.entropy;
            epoch_kl += stats.kl;
            epoch_batches += 1;
            batches_done += 1;
        }
        epoch_kl /= epoch_batches as f64;
        summary.epoch_kls.push(epoch_kl);
        summary.epochs_run += 1;

        match trust {
            TrustState::Clip => {
                if epoch_kl > 1.5 * config.target_kl {
                    break;
                }
            }
            TrustState::PidKl(state) => {
                pid_kl_update(state, epoch_kl);
                summary.c_kl = Some(state.c_kl);
            }
        }
    }

    let b = batches_done as f64;
    summary.policy_loss /= b;
    summary.value_loss /= b;
    summary.entropy /= b;
    Ok(summary)
}

/// Full training loop: collect fixed-length rollouts, update, log. The run is
/// a deterministic function of (environment contents, config, seed).
pub fn train_ppo(
    env: &mut dyn Environment,
    layout: ObsLayout,
    config: &PpoConfig,
    region: &TrustRegion,
    seed: u64,
) -> Result<(ActorCritic, TrainLog)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = ActorCritic::new(
        layout,
        config.hidden,
        config.gru_hidden,
        config.gru_dropout,
        env.n_actions(),
        &mut rng,
    );
    let mut opt = Adam::new(AdamConfig::with_lr(config.lr));
    let mut trust = TrustState::from_region(region);
    let mut log = TrainLog::default();

    let mut obs = env.reset();
    let mut traj = Trajectory::default();
    let mut episode_return = 0.0;
    let mut step: u64 = 0;
    let mut update: u64 = 0;

    while step < config.total_steps {
        traj.clear();
        let mut last_done = false;
        for _ in 0..config.rollout_len {
            let mask = net.core.sample_dropout_mask(&mut rng);
            let (logits, value, _) = net.forward(&obs, mask.as_deref())?;
            let dist = Categorical::from_logits(&logits)?;
            let action = dist.sample(&mut rng);
            let out = env.step(action);
            step += 1;
            episode_return += out.reward;

            traj.obs.push(std::mem::take(&mut obs));
            traj.actions.push(action);
            traj.log_probs.push(dist.log_probs[action]);
            traj.values.push(value);
            traj.rewards.push(out.reward);
            traj.dones.push(out.done);

            last_done = out.done;
            if out.done {
                log.push_episode(step, episode_return);
                episode_return = 0.0;
                obs = env.reset();
            } else {
                obs = out.obs;
            }
        }
        let bootstrap = if last_done { 0.0 } else { net.forward(&obs, None)?.1 };
        let summary = ppo_update(&mut net, &mut opt, &traj, bootstrap, config, &mut trust, &mut rng)?;
        update += 1;

        let mut record = UpdateRecord::at(step, update);
        record.policy_loss = Some(summary.policy_loss);
        record.value_loss = Some(summary.value_loss);
        record.entropy = Some(summary.entropy);
        record.kl = Some(summary.final_kl());
        record.epoch_kls = Some(summary.epoch_kls.clone());
        record.epochs_run = Some(summary.epochs_run);
        record.c_kl = summary.c_kl;
        log.push_update(record);
    }
    Ok((net, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::BanditEnv;

    #[test]
    fn clip_loss_cases() {
        assert!((ppo_clip_loss(1.3, 1.0, 0.1) - (-1.1)).abs() < 1e-12);
        assert!((ppo_clip_loss(0.5, -1.0, 0.2) - 0.8).abs() < 1e-12);
        let a = 0.37;
        assert!((ppo_clip_loss(1.0, a, 0.1) - (-a)).abs() < 1e-12);
    }

    #[test]
    fn clip_loss_never_beats_either_branch() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let ratio = rng.gen_range(0.01..3.0);
            let adv = rng.gen_range(-2.0..2.0);
            let delta = rng.gen_range(0.05..0.5);
            let surrogate = -ppo_clip_loss(ratio, adv, delta);
            assert!(surrogate <= ratio * adv + 1e-12);
            assert!(surrogate <= ratio.clamp(1.0 - delta, 1.0 + delta) * adv + 1e-12);
        }
    }

    #[test]
    fn pid_cases() {
        let mut s = PidKlState::new(&PidKlConfig {
            kp: 0.5,
            ki: 0.0,
            kd: 0.0,
            c_init: 1.0,
            target_kl: 0.01,
        });
        pid_kl_update(&mut s, 0.03);
        assert!((s.c_kl - 1.01).abs() < 1e-12);

        // A large negative error clamps at zero.
        let mut s = PidKlState::new(&PidKlConfig {
            kp: 100.0,
            ki: 0.0,
            kd: 0.0,
            c_init: 0.5,
            target_kl: 0.5,
        });
        pid_kl_update(&mut s, 0.0);
        assert_eq!(s.c_kl, 0.0);

        // Exactly on target is a fixed point.
        let mut s = PidKlState::new(&PidKlConfig::default());
        let target = s.target_kl;
        for _ in 0..10 {
            pid_kl_update(&mut s, target);
        }
        assert!((s.c_kl - 1.0).abs() < 1e-12);
        assert_eq!(s.integral, 0.0);
    }

    #[test]
    fn pure_proportional_when_clamp_inactive() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let kp = rng.gen_range(0.1..2.0);
            let mut s = PidKlState::new(&PidKlConfig {
                kp,
                ki: 0.0,
                kd: 0.0,
                c_init: rng.gen_range(1.0..5.0),
                target_kl: 0.01,
            });
            let before = s.c_kl;
            let measured = rng.gen_range(0.0..0.05);
            pid_kl_update(&mut s, measured);
            if s.c_kl > 0.0 {
                assert!((s.c_kl - before - kp * (measured - 0.01)).abs() < 1e-12);
            }
        }
    }

    fn bandit_config() -> PpoConfig {
        PpoConfig {
            lr: 3e-3,
            total_steps: 12_800,
            rollout_len: 64,
            batch: 32,
            ..PpoConfig::heater_default()
        }
    }

    #[test]
    fn zero_advantage_rollout_barely_moves_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layout = ObsLayout::bandit();
        let mut net = ActorCritic::new(layout, 16, 8, 0.0, 2, &mut rng);
        let mut opt = Adam::new(AdamConfig::with_lr(2.5e-4));
        let mut trust = TrustState::Clip;
        let n = 64;
        let traj = Trajectory {
            obs: vec![vec![1.0]; n],
            actions: (0..n).map(|i| i % 2).collect(),
            log_probs: vec![(0.5f64).ln(); n],
            values: vec![0.0; n],
            rewards: vec![0.0; n],
            dones: vec![true; n],
        };
        let config = bandit_config();
        let summary =
            ppo_update(&mut net, &mut opt, &traj, 0.0, &config, &mut trust, &mut rng).unwrap();
        assert!(summary.final_kl() < 1e-3, "kl {}", summary.final_kl());
    }

    #[test]
    fn bandit_converges_to_best_arm() {
        let mut env = BanditEnv::default();
        let config = bandit_config();
        let (net, _) = train_ppo(&mut env, ObsLayout::bandit(), &config, &TrustRegion::Clip, 1)
            .unwrap();
        let (logits, _, _) = net.forward(&[1.0], None).unwrap();
        let dist = Categorical::from_logits(&logits).unwrap();
        assert_eq!(dist.argmax(), 0);
        assert!(dist.probs[0] > 0.95, "p(best arm) = {}", dist.probs[0]);
    }

    #[test]
    fn forced_kl_overshoot_triggers_early_stop() {
        let mut env = BanditEnv::default();
        let mut config = bandit_config();
        config.lr *= 100.0;
        config.total_steps = 64 * 20;
        let (_, log) = train_ppo(&mut env, ObsLayout::bandit(), &config, &TrustRegion::Clip, 2)
            .unwrap();
        let stopped_early = log
            .updates()
            .any(|u| u.epochs_run.unwrap_or(config.epochs) < config.epochs);
        assert!(stopped_early, "expected at least one early-stopped update");
    }

    #[test]
    fn kl_stays_near_early_stop_bound_in_clip_mode() {
        let mut env = BanditEnv::default();
        let config = bandit_config();
        let (_, log) = train_ppo(&mut env, ObsLayout::bandit(), &config, &TrustRegion::Clip, 3)
            .unwrap();
        for u in log.updates() {
            let kls = u.epoch_kls.as_ref().unwrap();
            // Every epoch before the last must have been under the stop bound.
            for kl in &kls[..kls.len() - 1] {
                assert!(*kl <= 1.5 * config.target_kl + 1e-12);
            }
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let run = || {
            let mut env = BanditEnv::default();
            let mut config = bandit_config();
            config.total_steps = 64 * 5;
            train_ppo(&mut env, ObsLayout::bandit(), &config, &TrustRegion::Clip, 9).unwrap()
        };
        let (net_a, log_a) = run();
        let (net_b, log_b) = run();
        assert_eq!(log_a.to_ndjson(), log_b.to_ndjson());
        use crate::neural::Parameterized;
        for i in 0..net_a.num_tensors() {
            assert_eq!(net_a.tensor(i).values, net_b.tensor(i).values);
        }
    }
}
