//! Tabular Q-learning baseline for the battery task, keyed on the hour, the
//! discretized charge level, and quartile-binned load/PV readings.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TrainLog, UpdateRecord};
use crate::battery::{observe_battery, BatteryEnv, BatteryState};
use crate::env::Environment;
use crate::error::Result;
use crate::forecast::Normalizer;

#[derive(Debug, Clone, PartialEq)]
pub struct QTableConfig {
    pub lr: f64,
    pub gamma: f64,
    pub eps_start: f64,
    /// Per-step linear decrement of epsilon.
    pub eps_decrement: f64,
    pub eps_floor: f64,
    pub total_steps: u64,
}

impl Default for QTableConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            gamma: 0.89,
            eps_start: 1.0,
            eps_decrement: 1e-4,
            eps_floor: 0.05,
            total_steps: 200_000,
        }
    }
}

impl QTableConfig {
    pub fn epsilon_at(&self, step: u64) -> f64 {
        (self.eps_start - self.eps_decrement * step as f64).max(self.eps_floor)
    }
}

/// State key: (hour, soc level, load bin, pv bin).
pub type StateKey = (u8, u8, u8, u8);

/// Sparse Q-table; unvisited keys read as zero. The map serializes as an
/// entry list because JSON keys must be strings.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct QTable {
    #[serde(with = "table_entries")]
    pub table: BTreeMap<StateKey, [f64; 3]>,
    /// Quartile edges fitted on training-month data.
    pub load_edges: [f64; 3],
    pub pv_edges: [f64; 3],
}

mod table_entries {
    use super::StateKey;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<StateKey, [f64; 3]>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let entries: Vec<(StateKey, [f64; 3])> = map.iter().map(|(k, v)| (*k, *v)).collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<StateKey, [f64; 3]>, D::Error> {
        let entries: Vec<(StateKey, [f64; 3])> = Vec::deserialize(d)?;
        Ok(entries.into_iter().collect())
    }
}

impl QTable {
    /// Quartile edges from training-month load/PV samples.
    pub fn fit_bins(loads: &[f64], pvs: &[f64]) -> ([f64; 3], [f64; 3]) {
        let edges = |values: &[f64]| -> [f64; 3] {
            let mut v = values.to_vec();
            v.sort_by(f64::total_cmp);
            let q = |p: f64| crate::forecast::percentile_linear(&v, p);
            [q(0.25), q(0.50), q(0.75)]
        };
        (edges(loads), edges(pvs))
    }

    fn bin(edges: &[f64; 3], value: f64) -> u8 {
        edges.iter().take_while(|e| value > **e).count() as u8
    }

    pub fn key(&self, state: &BatteryState, norm: &Normalizer) -> StateKey {
        let obs = observe_battery(state, norm);
        (
            state.hour,
            obs.soc_level,
            Self::bin(&self.load_edges, state.p_load),
            Self::bin(&self.pv_edges, state.p_pv),
        )
    }

    pub fn values(&self, key: &StateKey) -> [f64; 3] {
        self.table.get(key).copied().unwrap_or([0.0; 3])
    }

    pub fn greedy(&self, key: &StateKey) -> usize {
        let q = self.values(key);
        super::dqn::argmax(&q)
    }
}

/// Standard Q-learning on the battery environment.
pub fn train_qtable(
    env: &mut BatteryEnv,
    norm: &Normalizer,
    config: &QTableConfig,
    seed: u64,
) -> Result<(QTable, TrainLog)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut qt = QTable::default();
    // Bin edges come from the data the env will replay.
    let mut loads = Vec::new();
    let mut pvs = Vec::new();
    {
        // A pass over one full cycle of episodes gathers the fit sample.
        for ep in 0..env.num_episodes() {
            env.reset_to(ep);
            loop {
                let s = env.state();
                loads.push(s.p_load);
                pvs.push(s.p_pv);
                let out = env.step(2); // idle walk, state transitions only
                if out.done {
                    break;
                }
            }
        }
    }
    let (load_edges, pv_edges) = QTable::fit_bins(&loads, &pvs);
    qt.load_edges = load_edges;
    qt.pv_edges = pv_edges;

    let mut log = TrainLog::default();
    env.reset();
    let mut key = qt.key(env.state(), norm);
    let mut episode_return = 0.0;

    for step in 0..config.total_steps {
        let eps = config.epsilon_at(step);
        let action = if rng.gen::<f64>() < eps {
            rng.gen_range(0..3)
        } else {
            qt.greedy(&key)
        };
        let out = env.step(action);
        episode_return += out.reward;
        let next_key = qt.key(env.state(), norm);
        let next_max = if out.done {
            0.0
        } else {
            let q = qt.values(&next_key);
            q.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        };
        let entry = qt.table.entry(key).or_insert([0.0; 3]);
        entry[action] += config.lr * (out.reward + config.gamma * next_max - entry[action]);

        if out.done {
            log.push_episode(step + 1, episode_return);
            episode_return = 0.0;
            env.reset();
            key = qt.key(env.state(), norm);
        } else {
            key = next_key;
        }

        if (step + 1) % 1000 == 0 {
            let mut record = UpdateRecord::at(step + 1, step + 1);
            record.epsilon = Some(eps);
            log.push_update(record);
        }
    }
    Ok((qt, log))
}
