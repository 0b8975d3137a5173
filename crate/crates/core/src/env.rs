//! Common environment interface the agents train against.

use crate::heater::DayLedger;

/// Side-channel facts about a step, consumed by evaluation and reporting.
#[derive(Debug, Clone, Default)]
pub struct StepInfo {
    /// Hour-of-year index of the step that was just taken.
    pub index: usize,
    /// Electricity drawn from the grid over the step (kWh, never negative).
    pub grid_import_kwh: f64,
    /// Import the farm would have drawn with no controllable device.
    pub baseline_import_kwh: f64,
    pub price: f64,
    /// Battery state of charge after the step, when applicable.
    pub soc: Option<f64>,
    /// Daily run-time ledger entry emitted at a midnight boundary.
    pub ledger: Option<DayLedger>,
    /// Whether the deferrable device ran during the step.
    pub device_on: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// A single-owner episodic MDP over the hourly year.
///
/// Episodes are pre-sliced windows; `reset` starts the next one in cyclic
/// order and `reset_to` jumps to a specific window (evaluation iterates all
/// of them exactly once).
pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn num_episodes(&self) -> usize;
    fn reset(&mut self) -> Vec<f64>;
    fn reset_to(&mut self, episode: usize) -> Vec<f64>;
    fn step(&mut self, action: usize) -> StepOutcome;
}
