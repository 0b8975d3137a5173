//! Run configuration: TOML `[section] key = value` files plus CLI overrides,
//! resolved against per-environment defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{DqnConfig, PidKlConfig, PpoConfig, QTableConfig, SacConfig};
use crate::battery::BatteryParams;
use crate::data::{HourRange, SplitSpec};
use crate::error::{Error, Result};
use crate::forecast::ForecastMode;
use crate::heater::{HeaterParams, TaskScope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Battery,
    Heater,
}

impl EnvKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "battery" => Ok(EnvKind::Battery),
            "heater" => Ok(EnvKind::Heater),
            other => Err(Error::Config(format!("unknown env '{other}'"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EnvKind::Battery => "battery",
            EnvKind::Heater => "heater",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Ppo,
    Fppo,
    Pidkl,
    Dqn,
    Sac,
    Qtable,
    Rule,
}

impl AgentKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ppo" => Ok(AgentKind::Ppo),
            "fppo" => Ok(AgentKind::Fppo),
            "pidkl" => Ok(AgentKind::Pidkl),
            "dqn" => Ok(AgentKind::Dqn),
            "sac" => Ok(AgentKind::Sac),
            "qtable" => Ok(AgentKind::Qtable),
            "rule" => Ok(AgentKind::Rule),
            other => Err(Error::Config(format!("unknown agent '{other}'"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::Ppo => "ppo",
            AgentKind::Fppo => "fppo",
            AgentKind::Pidkl => "pidkl",
            AgentKind::Dqn => "dqn",
            AgentKind::Sac => "sac",
            AgentKind::Qtable => "qtable",
            AgentKind::Rule => "rule",
        }
    }

    /// Agents whose observations carry the planning scalars and forecast block.
    pub fn forecast_aware(&self) -> bool {
        matches!(self, AgentKind::Fppo | AgentKind::Pidkl | AgentKind::Sac)
    }

    /// The experiment pairings each agent was designed for.
    pub fn compatible_with(&self, env: EnvKind) -> bool {
        match self {
            AgentKind::Qtable | AgentKind::Rule => env == EnvKind::Battery,
            AgentKind::Fppo | AgentKind::Pidkl | AgentKind::Sac => env == EnvKind::Heater,
            AgentKind::Ppo | AgentKind::Dqn => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSpec {
    Synthetic { seed: u64 },
    Csv { path: PathBuf },
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub env_kind: EnvKind,
    pub agent: AgentKind,
    pub seeds: Vec<u64>,
    pub steps: u64,
    pub out_dir: PathBuf,
    pub force: bool,
    pub data: DataSpec,
    pub split: SplitSpec,
    pub episode_len: usize,
    pub battery: BatteryParams,
    pub heater: HeaterParams,
    pub forecast_mode: ForecastMode,
    pub ppo: PpoConfig,
    pub pidkl: PidKlConfig,
    pub dqn: DqnConfig,
    pub sac: SacConfig,
    pub qtable: QTableConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !self.force && !self.agent.compatible_with(self.env_kind) {
            return Err(Error::Config(format!(
                "agent '{}' is not set up for env '{}' (pass --force to override)",
                self.agent.as_str(),
                self.env_kind.as_str()
            )));
        }
        self.battery.validate()?;
        self.heater.validate()?;
        self.ppo.validate()?;
        Ok(())
    }

    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.out_dir.join(self.agent.as_str()).join(seed.to_string())
    }
}

// --- raw TOML shape -------------------------------------------------------

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub env: Option<String>,
    pub agent: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub steps: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub force: Option<bool>,
    pub episode_len: Option<usize>,
    pub data: Option<DataSection>,
    pub split: Option<SplitSection>,
    pub battery: Option<BatterySection>,
    pub heater: Option<HeaterSection>,
    pub forecast: Option<ForecastSection>,
    pub ppo: Option<PpoSection>,
    pub fppo: Option<PpoSection>,
    pub pidkl: Option<PidklSection>,
    pub dqn: Option<DqnSection>,
    pub sac: Option<SacSection>,
    pub qtable: Option<QtableSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub synthetic_seed: Option<u64>,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train_months: Option<Vec<u8>>,
    pub test_months: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatterySection {
    pub capacity_kwh: Option<f64>,
    pub rate_kw: Option<f64>,
    pub soc_min: Option<f64>,
    pub soc_max: Option<f64>,
    pub penalty: Option<f64>,
    pub initial_soc: Option<f64>,
    pub clamp_export: Option<bool>,
}

impl BatterySection {
    fn apply(&self, p: &mut BatteryParams) {
        if let Some(v) = self.capacity_kwh {
            p.capacity_kwh = v;
        }
        if let Some(v) = self.rate_kw {
            p.rate_kw = v;
        }
        if let Some(v) = self.soc_min {
            p.soc_min = v;
        }
        if let Some(v) = self.soc_max {
            p.soc_max = v;
        }
        if let Some(v) = self.penalty {
            p.penalty = v;
        }
        if let Some(v) = self.initial_soc {
            p.initial_soc = v;
        }
        if let Some(v) = self.clamp_export {
            p.clamp_export = v;
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeaterWeights {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeaterSection {
    pub device_kw: Option<f64>,
    pub daily_runtime_h: Option<i32>,
    pub task_alpha: Option<f64>,
    pub daily_penalty_mag: Option<f64>,
    /// Pairs of [start, end) hours.
    pub desired_windows: Option<Vec<[u8; 2]>>,
    pub clamp_export: Option<bool>,
    /// "every-hour" (literal hourly task term) or "pending-only".
    pub task_scope: Option<String>,
    pub weights: Option<HeaterWeights>,
}

impl HeaterSection {
    fn apply(&self, p: &mut HeaterParams) -> Result<()> {
        if let Some(v) = self.device_kw {
            p.device_kw = v;
        }
        if let Some(v) = self.daily_runtime_h {
            p.daily_runtime_h = v;
        }
        if let Some(v) = self.task_alpha {
            p.task_alpha = v;
        }
        if let Some(v) = self.daily_penalty_mag {
            p.daily_penalty_mag = v;
        }
        if let Some(windows) = &self.desired_windows {
            p.desired_windows = windows.iter().map(|w| HourRange::new(w[0], w[1])).collect();
        }
        if let Some(v) = self.clamp_export {
            p.clamp_export = v;
        }
        if let Some(scope) = &self.task_scope {
            p.task_scope = match scope.as_str() {
                "every-hour" => TaskScope::EveryHour,
                "pending-only" => TaskScope::PendingOnly,
                other => {
                    return Err(Error::Config(format!(
                        "unknown task_scope '{other}' (expected every-hour or pending-only)"
                    )))
                }
            };
        }
        if let Some(w) = &self.weights {
            if let Some(a) = w.alpha {
                p.alpha_weight = a;
            }
            if let Some(b) = w.beta {
                p.beta_weight = b;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastSection {
    /// "one" or "all".
    pub mode: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoSection {
    pub lr: Option<f64>,
    pub gamma: Option<f64>,
    pub clip: Option<f64>,
    pub batch: Option<usize>,
    pub rollout_len: Option<usize>,
    pub epochs: Option<usize>,
    pub gae_lambda: Option<f64>,
    pub entropy_coef: Option<f64>,
    pub value_coef: Option<f64>,
    pub grad_clip: Option<f64>,
    pub target_kl: Option<f64>,
    pub gru_dropout: Option<f64>,
}

impl PpoSection {
    fn apply(&self, c: &mut PpoConfig) {
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        if let Some(v) = self.clip {
            c.clip = v;
        }
        if let Some(v) = self.batch {
            c.batch = v;
        }
        if let Some(v) = self.rollout_len {
            c.rollout_len = v;
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.gae_lambda {
            c.gae_lambda = v;
        }
        if let Some(v) = self.entropy_coef {
            c.entropy_coef = v;
        }
        if let Some(v) = self.value_coef {
            c.value_coef = v;
        }
        if let Some(v) = self.grad_clip {
            c.grad_clip = v;
        }
        if let Some(v) = self.target_kl {
            c.target_kl = v;
        }
        if let Some(v) = self.gru_dropout {
            c.gru_dropout = v;
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidklSection {
    pub kp: Option<f64>,
    pub ki: Option<f64>,
    pub kd: Option<f64>,
    pub c_init: Option<f64>,
    pub target_kl: Option<f64>,
}

impl PidklSection {
    fn apply(&self, c: &mut PidKlConfig) {
        if let Some(v) = self.kp {
            c.kp = v;
        }
        if let Some(v) = self.ki {
            c.ki = v;
        }
        if let Some(v) = self.kd {
            c.kd = v;
        }
        if let Some(v) = self.c_init {
            c.c_init = v;
        }
        if let Some(v) = self.target_kl {
            c.target_kl = v;
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqnSection {
    pub lr: Option<f64>,
    pub gamma: Option<f64>,
    pub eps_start: Option<f64>,
    pub eps_end: Option<f64>,
    pub buffer: Option<usize>,
    pub batch: Option<usize>,
    pub target_sync_steps: Option<u64>,
    pub eps_decay_fraction: Option<f64>,
    pub train_every: Option<u64>,
    pub learning_starts: Option<usize>,
}

impl DqnSection {
    fn apply(&self, c: &mut DqnConfig) {
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        if let Some(v) = self.eps_start {
            c.eps_start = v;
        }
        if let Some(v) = self.eps_end {
            c.eps_end = v;
        }
        if let Some(v) = self.buffer {
            c.buffer = v;
        }
        if let Some(v) = self.batch {
            c.batch = v;
        }
        if let Some(v) = self.target_sync_steps {
            c.target_sync_steps = v;
        }
        if let Some(v) = self.eps_decay_fraction {
            c.eps_decay_fraction = v;
        }
        if let Some(v) = self.train_every {
            c.train_every = v;
        }
        if let Some(v) = self.learning_starts {
            c.learning_starts = v;
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SacSection {
    pub lr: Option<f64>,
    pub gamma: Option<f64>,
    pub buffer: Option<usize>,
    pub batch: Option<usize>,
    pub tau: Option<f64>,
    pub target_entropy_scale: Option<f64>,
    pub gru_dropout: Option<f64>,
    pub learning_starts: Option<usize>,
    pub update_every: Option<u64>,
    pub alpha_init: Option<f64>,
}

impl SacSection {
    fn apply(&self, c: &mut SacConfig) {
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        if let Some(v) = self.buffer {
            c.buffer = v;
        }
        if let Some(v) = self.batch {
            c.batch = v;
        }
        if let Some(v) = self.tau {
            c.tau = v;
        }
        if let Some(v) = self.target_entropy_scale {
            c.target_entropy_scale = v;
        }
        if let Some(v) = self.gru_dropout {
            c.gru_dropout = v;
        }
        if let Some(v) = self.learning_starts {
            c.learning_starts = v;
        }
        if let Some(v) = self.update_every {
            c.update_every = v;
        }
        if let Some(v) = self.alpha_init {
            c.alpha_init = v;
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QtableSection {
    pub lr: Option<f64>,
    pub gamma: Option<f64>,
    pub eps_start: Option<f64>,
    pub eps_decrement: Option<f64>,
    pub eps_floor: Option<f64>,
}

impl QtableSection {
    fn apply(&self, c: &mut QTableConfig) {
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        if let Some(v) = self.eps_start {
            c.eps_start = v;
        }
        if let Some(v) = self.eps_decrement {
            c.eps_decrement = v;
        }
        if let Some(v) = self.eps_floor {
            c.eps_floor = v;
        }
    }
}

/// Command-line overrides layered on top of the file.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub env: Option<String>,
    pub agent: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub steps: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub data_csv: Option<PathBuf>,
    pub synthetic_seed: Option<u64>,
    pub fa_mode: Option<String>,
    pub force: bool,
}

pub fn parse_forecast_mode(s: &str) -> Result<ForecastMode> {
    match s {
        "one" => Ok(ForecastMode::One),
        "all" => Ok(ForecastMode::All),
        other => Err(Error::Config(format!("unknown forecast mode '{other}'"))),
    }
}

impl RawConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Resolve the raw file plus CLI overrides into a concrete config.
    pub fn resolve(&self, cli: &CliOverrides) -> Result<RunConfig> {
        let env_s = cli.env.clone().or(self.env.clone()).ok_or_else(|| {
            Error::Config("env is required (--env or `env = ...` in the config)".into())
        })?;
        let env_kind = EnvKind::parse(&env_s)?;
        let agent_s = cli.agent.clone().or(self.agent.clone()).ok_or_else(|| {
            Error::Config("agent is required (--agent or `agent = ...` in the config)".into())
        })?;
        let agent = AgentKind::parse(&agent_s)?;

        let seeds = cli.seeds.clone().or(self.seeds.clone()).unwrap_or_else(|| vec![1]);
        let steps = cli.steps.or(self.steps).unwrap_or(1_000_000);
        let out_dir = output_root(cli.out_dir.clone().or(self.out_dir.clone()));

        let data = if let Some(path) = &cli.data_csv {
            DataSpec::Csv { path: path.clone() }
        } else if let Some(seed) = cli.synthetic_seed {
            DataSpec::Synthetic { seed }
        } else if let Some(section) = &self.data {
            match (&section.csv, section.synthetic_seed) {
                (Some(path), None) => DataSpec::Csv { path: path.clone() },
                (None, Some(seed)) => DataSpec::Synthetic { seed },
                (None, None) => DataSpec::Synthetic { seed: 1 },
                (Some(_), Some(_)) => {
                    return Err(Error::Config(
                        "data section sets both csv and synthetic_seed".into(),
                    ))
                }
            }
        } else {
            DataSpec::Synthetic { seed: 1 }
        };

        let default_split = match env_kind {
            EnvKind::Battery => SplitSpec::battery_default(),
            EnvKind::Heater => SplitSpec::heater_default(),
        };
        let split = match &self.split {
            None => default_split,
            Some(s) => SplitSpec::new(
                s.train_months.as_deref().unwrap_or(&default_split.train_months.iter().copied().collect::<Vec<_>>()),
                s.test_months.as_deref().unwrap_or(&default_split.test_months.iter().copied().collect::<Vec<_>>()),
            )?,
        };

        let mut battery = BatteryParams::default();
        if let Some(s) = &self.battery {
            s.apply(&mut battery);
        }
        let mut heater = HeaterParams::default();
        if let Some(s) = &self.heater {
            s.apply(&mut heater)?;
        }

        let forecast_mode = match (&cli.fa_mode, &self.forecast) {
            (Some(m), _) => parse_forecast_mode(m)?,
            (None, Some(f)) => match &f.mode {
                Some(m) => parse_forecast_mode(m)?,
                None => ForecastMode::One,
            },
            (None, None) => ForecastMode::One,
        };

        let mut ppo = match env_kind {
            EnvKind::Battery => PpoConfig::battery_default(),
            EnvKind::Heater => PpoConfig::heater_default(),
        };
        // The plain-PPO section applies to every policy-gradient agent; the
        // forecast-aware section refines fppo and pidkl runs.
        if let Some(s) = &self.ppo {
            s.apply(&mut ppo);
        }
        if matches!(agent, AgentKind::Fppo | AgentKind::Pidkl) {
            if let Some(s) = &self.fppo {
                s.apply(&mut ppo);
            }
        }
        ppo.total_steps = steps;

        let mut pidkl = PidKlConfig::default();
        if let Some(s) = &self.pidkl {
            s.apply(&mut pidkl);
        }

        let mut dqn = DqnConfig::default();
        if let Some(s) = &self.dqn {
            s.apply(&mut dqn);
        }
        dqn.total_steps = steps;

        let mut sac = SacConfig::default();
        if let Some(s) = &self.sac {
            s.apply(&mut sac);
        }
        sac.total_steps = steps;

        let mut qtable = QTableConfig::default();
        if let Some(s) = &self.qtable {
            s.apply(&mut qtable);
        }
        qtable.total_steps = steps;

        let config = RunConfig {
            env_kind,
            agent,
            seeds,
            steps,
            out_dir,
            force: cli.force || self.force.unwrap_or(false),
            data,
            split,
            episode_len: self.episode_len.unwrap_or(24),
            battery,
            heater,
            forecast_mode,
            ppo,
            pidkl,
            dqn,
            sac,
            qtable,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Output root resolution: the FARM_DISPATCH_OUT environment variable
/// overrides everything, then the explicit flag/config value, then "runs".
pub fn output_root(configured: Option<PathBuf>) -> PathBuf {
    if let Ok(v) = std::env::var("FARM_DISPATCH_OUT") {
        if !v.is_empty() {
            return PathBuf::from(v);
        }
    }
    configured.unwrap_or_else(|| PathBuf::from("runs"))
}
