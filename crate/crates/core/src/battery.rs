//! Battery-dispatch MDP: three actions over a rate-limited store, grid-cost
//! reward with a fixed penalty for charging at the cap or discharging at the
//! floor, and continuous state-of-charge physics underneath a discretized
//! observation.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::data::{TimeSeriesYear, TimeStepRecord};
use crate::env::{Environment, StepInfo, StepOutcome};
use crate::error::{Error, Result};
use crate::forecast::Normalizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub capacity_kwh: f64,
    /// Charge/discharge rate in kW; also the energy the reward equations bill
    /// or credit per action hour.
    pub rate_kw: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Magnitude of the fixed invalid-action penalty (subtracted from reward).
    pub penalty: f64,
    pub initial_soc: f64,
    /// When true, a negative grid term earns nothing instead of being paid
    /// out at the import price.
    pub clamp_export: bool,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            capacity_kwh: 13.5,
            rate_kw: 5.0,
            soc_min: 0.15,
            soc_max: 0.85,
            penalty: 15.0,
            initial_soc: 0.5,
            clamp_export: false,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity_kwh > 0.0 && self.rate_kw > 0.0) {
            return Err(Error::Config("battery capacity and rate must be positive".into()));
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return Err(Error::Config("need 0 <= soc_min < soc_max <= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.initial_soc) {
            return Err(Error::Config("initial_soc must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    pub hour: u8,
    pub soc: f64,
    pub p_load: f64,
    pub p_pv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatteryAction {
    Charge,
    Discharge,
    Idle,
}

impl BatteryAction {
    pub const ALL: [BatteryAction; 3] =
        [BatteryAction::Charge, BatteryAction::Discharge, BatteryAction::Idle];

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn index(self) -> usize {
        match self {
            BatteryAction::Charge => 0,
            BatteryAction::Discharge => 1,
            BatteryAction::Idle => 2,
        }
    }
}

/// Observation features: normalized hour, the 11-level charge reading, the
/// continuous fraction, and z-scored load/PV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryObservation {
    pub hour_norm: f64,
    pub soc_level: u8,
    pub soc_cont: f64,
    pub p_load_z: f64,
    pub p_pv_z: f64,
}

impl BatteryObservation {
    pub fn to_vec(self) -> Vec<f64> {
        vec![
            self.hour_norm,
            self.soc_level as f64 / 10.0,
            self.soc_cont,
            self.p_load_z,
            self.p_pv_z,
        ]
    }
}

pub const BATTERY_OBS_DIM: usize = 5;

/// Grid term of the reward case matching the action (kW; negative means the
/// farm would be exporting).
pub fn grid_term(state: &BatteryState, action: BatteryAction, params: &BatteryParams) -> f64 {
    match action {
        BatteryAction::Charge => state.p_load + (params.rate_kw - state.p_pv),
        BatteryAction::Discharge => (state.p_load - state.p_pv) - params.rate_kw,
        BatteryAction::Idle => state.p_load - state.p_pv,
    }
}

fn penalty_applies(soc: f64, action: BatteryAction, params: &BatteryParams) -> bool {
    match action {
        BatteryAction::Charge => soc >= params.soc_max,
        BatteryAction::Discharge => soc <= params.soc_min,
        BatteryAction::Idle => false,
    }
}

/// Negated grid cost for the chosen action, minus the fixed penalty when the
/// action pushes against a state-of-charge bound (boundary inclusive).
pub fn battery_reward(
    state: &BatteryState,
    action: BatteryAction,
    price: f64,
    params: &BatteryParams,
) -> f64 {
    let grid = grid_term(state, action, params);
    let billed = if params.clamp_export { grid.max(0.0) } else { grid };
    let base = -(billed * price);
    if penalty_applies(state.soc, action, params) {
        base + (-params.penalty)
    } else {
        base
    }
}

/// Advance one hour. A penalized action moves no energy; a legal action moves
/// the full rate, truncated at the nearer bound. Grid import is physical: a
/// frozen action imports exactly what idling would, while legal actions
/// import the (floored) grid term of their reward case.
pub fn battery_step(
    state: &BatteryState,
    action: BatteryAction,
    price: f64,
    next_record: &TimeStepRecord,
    params: &BatteryParams,
) -> (BatteryState, f64, f64) {
    let reward = battery_reward(state, action, price, params);
    let delta = params.rate_kw / params.capacity_kwh;
    let soc_next = match action {
        BatteryAction::Charge if state.soc < params.soc_max => {
            (state.soc + delta).min(params.soc_max)
        }
        BatteryAction::Discharge if state.soc > params.soc_min => {
            (state.soc - delta).max(params.soc_min)
        }
        _ => state.soc,
    }
    .clamp(0.0, 1.0);
    let effective = if penalty_applies(state.soc, action, params) {
        BatteryAction::Idle
    } else {
        action
    };
    let grid_import_kwh = grid_term(state, effective, params).max(0.0);
    let next_state = BatteryState {
        hour: next_record.hour,
        soc: soc_next,
        p_load: next_record.load_kw,
        p_pv: next_record.pv_kw,
    };
    (next_state, reward, grid_import_kwh)
}

/// Discretize and normalize a state. Level ties round half away from zero,
/// so soc = 0.85 reads as level 9.
pub fn observe_battery(state: &BatteryState, norm: &Normalizer) -> BatteryObservation {
    let level = (state.soc * 10.0).round().clamp(0.0, 10.0) as u8;
    BatteryObservation {
        hour_norm: state.hour as f64 / 23.0,
        soc_level: level,
        soc_cont: state.soc,
        p_load_z: norm.z_load(state.p_load),
        p_pv_z: norm.z_pv(state.p_pv),
    }
}

/// Episodic battery environment over pre-sliced windows of the year.
#[derive(Debug, Clone)]
pub struct BatteryEnv {
    records: Vec<TimeStepRecord>,
    episodes: Vec<Range<usize>>,
    params: BatteryParams,
    norm: Normalizer,
    cursor: usize,
    idx: usize,
    steps_left: usize,
    state: BatteryState,
}

impl BatteryEnv {
    pub fn new(
        year: &TimeSeriesYear,
        episodes: Vec<Range<usize>>,
        params: BatteryParams,
        norm: Normalizer,
    ) -> Result<Self> {
        params.validate()?;
        if episodes.is_empty() {
            return Err(Error::Config("battery env needs at least one episode".into()));
        }
        let first = episodes[0].start;
        let records = year.records.clone();
        let state = BatteryState {
            hour: records[first].hour,
            soc: params.initial_soc,
            p_load: records[first].load_kw,
            p_pv: records[first].pv_kw,
        };
        Ok(Self { records, episodes, params, norm, cursor: 0, idx: first, steps_left: 0, state })
    }

    pub fn params(&self) -> &BatteryParams {
        &self.params
    }

    pub fn state(&self) -> &BatteryState {
        &self.state
    }

    pub fn current_price(&self) -> f64 {
        self.records[self.idx].price
    }

    pub fn current_index(&self) -> usize {
        self.idx
    }
}

impl Environment for BatteryEnv {
    fn obs_dim(&self) -> usize {
        BATTERY_OBS_DIM
    }

    fn n_actions(&self) -> usize {
        3
    }

    fn num_episodes(&self) -> usize {
        self.episodes.len()
    }

    fn reset(&mut self) -> Vec<f64> {
        let ep = self.cursor % self.episodes.len();
        self.cursor += 1;
        self.reset_to(ep)
    }

    fn reset_to(&mut self, episode: usize) -> Vec<f64> {
        let range = self.episodes[episode].clone();
        self.idx = range.start;
        self.steps_left = range.len();
        let r = &self.records[self.idx];
        self.state = BatteryState {
            hour: r.hour,
            soc: self.params.initial_soc,
            p_load: r.load_kw,
            p_pv: r.pv_kw,
        };
        observe_battery(&self.state, &self.norm).to_vec()
    }

    fn step(&mut self, action: usize) -> StepOutcome {
        assert!(self.steps_left > 0, "step called on finished episode");
        let action = BatteryAction::from_index(action);
        let price = self.records[self.idx].price;
        let baseline = (self.state.p_load - self.state.p_pv).max(0.0);
        let next_record = self.records[(self.idx + 1) % self.records.len()];
        let (next_state, reward, grid_import_kwh) =
            battery_step(&self.state, action, price, &next_record, &self.params);
        let index = self.idx;
        self.state = next_state;
        self.idx = (self.idx + 1) % self.records.len();
        self.steps_left -= 1;
        StepOutcome {
            obs: observe_battery(&self.state, &self.norm).to_vec(),
            reward,
            done: self.steps_left == 0,
            info: StepInfo {
                index,
                grid_import_kwh,
                baseline_import_kwh: baseline,
                price,
                soc: Some(self.state.soc),
                ledger: None,
                device_on: None,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, slice_episodes, SplitRole, SplitSpec, SyntheticSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> BatteryParams {
        BatteryParams::default()
    }

    fn state(soc: f64, p_load: f64, p_pv: f64) -> BatteryState {
        BatteryState { hour: 12, soc, p_load, p_pv }
    }

    #[test]
    fn charge_case_reward() {
        let r = battery_reward(&state(0.5, 10.0, 2.0), BatteryAction::Charge, 0.2, &params());
        assert!((r - (-2.6)).abs() < 1e-12, "got {r}");
    }

    #[test]
    fn idle_with_pv_covering_load_is_free() {
        let r = battery_reward(&state(0.3, 5.0, 5.0), BatteryAction::Idle, 0.27, &params());
        assert_eq!(r, 0.0);
    }

    #[test]
    fn charge_at_cap_is_pure_penalty_when_grid_term_vanishes() {
        let r = battery_reward(&state(0.85, 0.0, 5.0), BatteryAction::Charge, 0.1, &params());
        assert_eq!(r, -15.0);
    }

    #[test]
    fn discharge_case_reward() {
        let r = battery_reward(&state(0.5, 8.0, 1.0), BatteryAction::Discharge, 0.3, &params());
        assert!((r - (-0.6)).abs() < 1e-12, "got {r}");
    }

    fn next_rec() -> TimeStepRecord {
        TimeStepRecord { index: 1, hour: 13, month: 1, load_kw: 9.0, pv_kw: 3.0, price: 0.2 }
    }

    #[test]
    fn partial_charge_caps_without_penalty() {
        let (next, reward, _) =
            battery_step(&state(0.5, 0.0, 0.0), BatteryAction::Charge, 0.2, &next_rec(), &params());
        assert!((next.soc - 0.85).abs() < 1e-12);
        assert!(reward > -15.0, "no penalty expected, got {reward}");
    }

    #[test]
    fn charge_at_cap_freezes_soc_and_penalizes() {
        let (next, reward, _) =
            battery_step(&state(0.85, 0.0, 5.0), BatteryAction::Charge, 0.1, &next_rec(), &params());
        assert_eq!(next.soc, 0.85);
        assert_eq!(reward, -15.0);
    }

    #[test]
    fn idle_grid_import_and_reward() {
        let (_, reward, import) =
            battery_step(&state(0.5, 10.0, 2.0), BatteryAction::Idle, 0.2, &next_rec(), &params());
        assert_eq!(import, 8.0);
        assert!((reward - (-1.6)).abs() < 1e-12);
    }

    #[test]
    fn import_is_floored_at_zero_even_without_clamp() {
        let (_, reward, import) =
            battery_step(&state(0.5, 1.0, 9.0), BatteryAction::Idle, 0.2, &next_rec(), &params());
        assert_eq!(import, 0.0);
        assert!(reward > 0.0, "literal reward pays for surplus, got {reward}");
    }

    fn flat_norm() -> Normalizer {
        use crate::forecast::ChannelStats;
        Normalizer {
            load: ChannelStats { mean: 0.0, std: 1.0 },
            pv: ChannelStats { mean: 0.0, std: 1.0 },
            price: ChannelStats { mean: 0.0, std: 1.0 },
            clip_sigma: 5.0,
        }
    }

    #[test]
    fn observation_levels() {
        let norm = flat_norm();
        assert_eq!(observe_battery(&state(0.43, 0.0, 0.0), &norm).soc_level, 4);
        assert_eq!(observe_battery(&state(0.0, 0.0, 0.0), &norm).soc_level, 0);
        assert_eq!(observe_battery(&state(1.0, 0.0, 0.0), &norm).soc_level, 10);
        // Half-way ties round away from zero.
        assert_eq!(observe_battery(&state(0.85, 0.0, 0.0), &norm).soc_level, 9);
    }

    #[test]
    fn idle_reward_ignores_soc_and_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let p_load = rng.gen_range(0.0..30.0);
            let p_pv = rng.gen_range(0.0..25.0);
            let price = rng.gen_range(0.0..0.5);
            let mut p1 = params();
            p1.rate_kw = rng.gen_range(0.1..10.0);
            let mut p2 = params();
            p2.rate_kw = rng.gen_range(0.1..10.0);
            let s1 = state(rng.gen_range(0.0..1.0), p_load, p_pv);
            let s2 = state(rng.gen_range(0.0..1.0), p_load, p_pv);
            let r1 = battery_reward(&s1, BatteryAction::Idle, price, &p1);
            let r2 = battery_reward(&s2, BatteryAction::Idle, price, &p2);
            assert_eq!(r1, r2);
        }
    }

    #[test]
    fn penalty_fires_iff_bound_condition_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = params();
        for _ in 0..2000 {
            let soc: f64 = rng.gen_range(0.0..1.0);
            let s = state(soc, rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0));
            let price = rng.gen_range(0.0..0.5);
            for action in BatteryAction::ALL {
                let with = battery_reward(&s, action, price, &p);
                let mut unpenalized = p.clone();
                unpenalized.penalty = 0.0;
                let without = battery_reward(&s, action, price, &unpenalized);
                let expected = match action {
                    BatteryAction::Charge => soc >= p.soc_max,
                    BatteryAction::Discharge => soc <= p.soc_min,
                    BatteryAction::Idle => false,
                };
                let fired = ((with - without) + 15.0).abs() < 1e-9;
                assert_eq!(fired, expected, "soc {soc} action {action:?}");
            }
        }
    }

    #[test]
    fn soc_never_leaves_unit_interval_and_band_moves_are_one_sided() {
        let year = generate_synthetic(&SyntheticSpec::with_seed(9)).unwrap();
        let split = SplitSpec::battery_default();
        let eps = slice_episodes(&split, SplitRole::Train, 24).unwrap();
        let mut env = BatteryEnv::new(&year, eps, params(), flat_norm()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut steps = 0usize;
        'outer: loop {
            env.reset();
            loop {
                let soc_before = env.state().soc;
                let action = rng.gen_range(0..3);
                let out = env.step(action);
                let soc_after = out.info.soc.unwrap();
                assert!((0.0..=1.0).contains(&soc_after));
                if (params().soc_min..=params().soc_max).contains(&soc_before) {
                    match BatteryAction::from_index(action) {
                        BatteryAction::Charge => {
                            assert!(soc_after >= soc_before && soc_after <= params().soc_max)
                        }
                        BatteryAction::Discharge => {
                            assert!(soc_after <= soc_before && soc_after >= params().soc_min)
                        }
                        BatteryAction::Idle => assert_eq!(soc_after, soc_before),
                    }
                }
                steps += 1;
                if steps >= 100_000 {
                    break 'outer;
                }
                if out.done {
                    break;
                }
            }
        }
    }
}
