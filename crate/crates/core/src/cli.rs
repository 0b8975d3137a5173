//! Command implementations behind the binary: data generation/validation,
//! forecast calibration, training, evaluation, comparison, and reporting.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::{
    rule_based_battery, train_dqn, train_ppo, train_qtable, train_sac, ActorCritic, HeadNet,
    ObsLayout, QTable, TariffLevels, TrainLog, TrustRegion,
};
use crate::battery::BatteryEnv;
use crate::config::{AgentKind, DataSpec, EnvKind, RunConfig};
use crate::data::{generate_synthetic, load_csv, slice_episodes, SplitRole, SyntheticSpec, TimeSeriesYear};
use crate::error::{Error, Result};
use crate::eval::{evaluate_battery, evaluate_heater};
use crate::forecast::{
    fit_bands, write_bands_csv, write_normalizer_csv, ForecastContext, Normalizer,
};
use crate::heater::HeaterEnv;
use crate::metrics::{
    median, wilcoxon_signed_rank, write_monthly_csv, write_profile_csv, RunReport,
};
use crate::neural::{load_checkpoint, save_checkpoint};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const QTABLE_FILE: &str = "qtable.json";
pub const STATS_FILE: &str = "stats.ndjson";
pub const REPORT_FILE: &str = "report.json";

/// Generate a synthetic year and write it as CSV.
pub fn cmd_gen_data(seed: u64, out: &Path) -> Result<()> {
    let year = generate_synthetic(&SyntheticSpec::with_seed(seed))?;
    crate::data::write_csv(&year, out)?;
    Ok(())
}

/// Validate a data file; returns a one-line summary on success.
pub fn cmd_validate_data(path: &Path) -> Result<String> {
    let year = load_csv(path)?;
    let load: f64 = year.records.iter().map(|r| r.load_kw).sum();
    let pv: f64 = year.records.iter().map(|r| r.pv_kw).sum();
    Ok(format!(
        "ok: 8760 hours, annual load {:.1} kWh, annual pv {:.1} kWh",
        load, pv
    ))
}

/// Fit residual bands and the normalizer on the training months of a file;
/// writes the band table plus a `<out>.norm.csv` sidecar.
pub fn cmd_calibrate(data: &Path, train_months: &[u8], out: &Path) -> Result<()> {
    let year = load_csv(data)?;
    let months = train_months.iter().copied().collect();
    let demand = year.load_series();
    let pv = year.pv_series();
    let bands_d = fit_bands(&demand, &months)?;
    let bands_p = fit_bands(&pv, &months)?;
    write_bands_csv(&bands_d, &bands_p, out)?;
    let norm = Normalizer::fit(&year, &months);
    write_normalizer_csv(&norm, &sidecar_path(out))?;
    Ok(())
}

/// Normalizer sidecar next to the band table: `bands.csv` -> `bands.norm.csv`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("bands");
    out.with_file_name(format!("{stem}.norm.csv"))
}

/// Data, splits, and fitted calibration shared across the seeds of one run.
pub struct Prepared {
    pub year: TimeSeriesYear,
    pub norm: Normalizer,
    pub train_episodes: Vec<Range<usize>>,
    pub test_episodes: Vec<Range<usize>>,
    pub fa: Option<ForecastContext>,
}

pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    let year = match &config.data {
        DataSpec::Synthetic { seed } => generate_synthetic(&SyntheticSpec::with_seed(*seed))?,
        DataSpec::Csv { path } => load_csv(path)?,
    };
    let norm = Normalizer::fit(&year, &config.split.train_months);
    let train_episodes = slice_episodes(&config.split, SplitRole::Train, config.episode_len)?;
    let test_episodes = slice_episodes(&config.split, SplitRole::Test, config.episode_len)?;
    let fa = if config.agent.forecast_aware() {
        Some(ForecastContext::fit(&year, &config.split.train_months, config.forecast_mode)?)
    } else {
        None
    };
    Ok(Prepared { year, norm, train_episodes, test_episodes, fa })
}

/// The outcome of one seed's training + test-month evaluation.
pub struct SeedRun {
    pub report: RunReport,
    pub log: TrainLog,
}

fn greedy_from_logits(logits: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..logits.len() {
        if logits[i] > logits[best] {
            best = i;
        }
    }
    best
}

fn battery_env(config: &RunConfig, prepared: &Prepared, episodes: Vec<Range<usize>>) -> Result<BatteryEnv> {
    BatteryEnv::new(&prepared.year, episodes, config.battery.clone(), prepared.norm)
}

fn heater_env(config: &RunConfig, prepared: &Prepared, episodes: Vec<Range<usize>>) -> Result<HeaterEnv> {
    HeaterEnv::new(
        &prepared.year,
        episodes,
        config.heater.clone(),
        prepared.norm,
        prepared.fa.clone(),
    )
}

fn obs_layout(config: &RunConfig) -> ObsLayout {
    match config.env_kind {
        EnvKind::Battery => ObsLayout::battery(),
        EnvKind::Heater => {
            let mode = config.agent.forecast_aware().then_some(config.forecast_mode);
            ObsLayout::heater(mode)
        }
    }
}

/// Train one seed and evaluate the greedy policy on the test months.
/// With `write_dir` set, the checkpoint, stats log, and report land there.
pub fn run_seed(
    config: &RunConfig,
    prepared: &Prepared,
    seed: u64,
    write_dir: Option<&Path>,
) -> Result<SeedRun> {
    let layout = obs_layout(config);
    let agent_name = config.agent.as_str();
    let split = config.split.clone();

    enum Trained {
        Policy(ActorCritic),
        Head(HeadNet),
        Table(QTable),
        Rule,
    }

    let (trained, log) = match (config.agent, config.env_kind) {
        (AgentKind::Ppo, EnvKind::Battery) => {
            let mut env = battery_env(config, prepared, prepared.train_episodes.clone())?;
            let (net, log) = train_ppo(&mut env, layout, &config.ppo, &TrustRegion::Clip, seed)?;
            (Trained::Policy(net), log)
        }
        (AgentKind::Ppo | AgentKind::Fppo, EnvKind::Heater) => {
            let mut env = heater_env(config, prepared, prepared.train_episodes.clone())?;
            let (net, log) = train_ppo(&mut env, layout, &config.ppo, &TrustRegion::Clip, seed)?;
            (Trained::Policy(net), log)
        }
        (AgentKind::Pidkl, EnvKind::Heater) => {
            let mut env = heater_env(config, prepared, prepared.train_episodes.clone())?;
            let trust = TrustRegion::PidKl(config.pidkl.clone());
            let (net, log) = train_ppo(&mut env, layout, &config.ppo, &trust, seed)?;
            (Trained::Policy(net), log)
        }
        (AgentKind::Dqn, EnvKind::Battery) => {
            let mut env = battery_env(config, prepared, prepared.train_episodes.clone())?;
            let (net, log) = train_dqn(&mut env, layout, &config.dqn, seed)?;
            (Trained::Head(net), log)
        }
        (AgentKind::Dqn, EnvKind::Heater) => {
            let mut env = heater_env(config, prepared, prepared.train_episodes.clone())?;
            let (net, log) = train_dqn(&mut env, layout, &config.dqn, seed)?;
            (Trained::Head(net), log)
        }
        (AgentKind::Sac, EnvKind::Heater) => {
            let mut env = heater_env(config, prepared, prepared.train_episodes.clone())?;
            let (nets, log) = train_sac(&mut env, layout, &config.sac, seed)?;
            (Trained::Head(nets.actor), log)
        }
        (AgentKind::Qtable, EnvKind::Battery) => {
            let mut env = battery_env(config, prepared, prepared.train_episodes.clone())?;
            let (table, log) = train_qtable(&mut env, &prepared.norm, &config.qtable, seed)?;
            (Trained::Table(table), log)
        }
        (AgentKind::Rule, EnvKind::Battery) => (Trained::Rule, TrainLog::default()),
        (agent, env) => {
            return Err(Error::Config(format!(
                "no training path for agent '{}' on env '{}'",
                agent.as_str(),
                env.as_str()
            )))
        }
    };

    // Greedy evaluation over the held-out months.
    let report = match config.env_kind {
        EnvKind::Battery => {
            let mut env = battery_env(config, prepared, prepared.test_episodes.clone())?;
            let tariff = TariffLevels::from_prices(&prepared.year.price_series());
            match &trained {
                Trained::Policy(net) => evaluate_battery(&mut env, agent_name, seed, split, |_s, obs, _p| {
                    let (logits, _, _) = net.forward(obs, None).expect("forward");
                    greedy_from_logits(&logits)
                })?,
                Trained::Head(net) => evaluate_battery(&mut env, agent_name, seed, split, |_s, obs, _p| {
                    let (q, _) = net.forward(obs, None).expect("forward");
                    greedy_from_logits(&q)
                })?,
                Trained::Table(table) => {
                    let norm = prepared.norm;
                    evaluate_battery(&mut env, agent_name, seed, split, |s, _obs, _p| {
                        table.greedy(&table.key(s, &norm))
                    })?
                }
                Trained::Rule => evaluate_battery(&mut env, agent_name, seed, split, |s, _obs, p| {
                    rule_based_battery(s, p, &tariff, &config.battery).index()
                })?,
            }
        }
        EnvKind::Heater => {
            let mut env = heater_env(config, prepared, prepared.test_episodes.clone())?;
            let windows = config.heater.desired_windows.clone();
            match &trained {
                Trained::Policy(net) => {
                    evaluate_heater(&mut env, agent_name, seed, split, &windows, |_s, obs| {
                        let (logits, _, _) = net.forward(obs, None).expect("forward");
                        greedy_from_logits(&logits)
                    })?
                }
                Trained::Head(net) => {
                    evaluate_heater(&mut env, agent_name, seed, split, &windows, |_s, obs| {
                        let (q, _) = net.forward(obs, None).expect("forward");
                        greedy_from_logits(&q)
                    })?
                }
                _ => {
                    return Err(Error::Config(
                        "table and rule policies are battery-only".into(),
                    ))
                }
            }
        }
    };

    if let Some(dir) = write_dir {
        std::fs::create_dir_all(dir)?;
        match &trained {
            Trained::Policy(net) => {
                save_checkpoint(net, &net.arch_string(), &dir.join(CHECKPOINT_FILE))?
            }
            Trained::Head(net) => {
                save_checkpoint(net, &net.arch_string(), &dir.join(CHECKPOINT_FILE))?
            }
            Trained::Table(table) => {
                let text = serde_json::to_string_pretty(table)
                    .map_err(|e| Error::Config(format!("qtable serialization: {e}")))?;
                std::fs::write(dir.join(QTABLE_FILE), text)?;
            }
            Trained::Rule => {}
        }
        std::fs::write(dir.join(STATS_FILE), log.to_ndjson())?;
        write_report_artifacts(&report, dir)?;
    }

    Ok(SeedRun { report, log })
}

fn write_report_artifacts(report: &RunReport, dir: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
    std::fs::write(dir.join(REPORT_FILE), json)?;
    write_monthly_csv(report, &dir.join("monthly.csv"))?;
    write_profile_csv(report, &dir.join("profile.csv"))?;
    Ok(())
}

/// Train every configured seed; artifacts land under `out/<agent>/<seed>/`.
pub fn cmd_train(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let prepared = prepare(config)?;
    let mut dirs = Vec::new();
    for &seed in &config.seeds {
        let dir = config.run_dir(seed);
        run_seed(config, &prepared, seed, Some(&dir))?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Rebuild the configured network, load a checkpoint, and evaluate it on the
/// test months; artifacts are written to `out_dir`.
pub fn cmd_evaluate(config: &RunConfig, checkpoint: Option<&Path>, out_dir: &Path) -> Result<RunReport> {
    config.validate()?;
    let prepared = prepare(config)?;
    let layout = obs_layout(config);
    let seed = *config.seeds.first().unwrap_or(&0);
    let split = config.split.clone();
    let agent_name = config.agent.as_str();
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let report = match config.env_kind {
        EnvKind::Battery => {
            let mut env = battery_env(config, &prepared, prepared.test_episodes.clone())?;
            match config.agent {
                AgentKind::Rule => {
                    let tariff = TariffLevels::from_prices(&prepared.year.price_series());
                    evaluate_battery(&mut env, agent_name, seed, split, |s, _o, p| {
                        rule_based_battery(s, p, &tariff, &config.battery).index()
                    })?
                }
                AgentKind::Qtable => {
                    let path = checkpoint
                        .ok_or_else(|| Error::Config("qtable evaluation needs --checkpoint".into()))?;
                    let text = std::fs::read_to_string(path)?;
                    let table: QTable = serde_json::from_str(&text)
                        .map_err(|e| Error::Checkpoint(format!("qtable parse: {e}")))?;
                    let norm = prepared.norm;
                    evaluate_battery(&mut env, agent_name, seed, split, |s, _o, _p| {
                        table.greedy(&table.key(s, &norm))
                    })?
                }
                AgentKind::Dqn => {
                    let path = required_checkpoint(checkpoint)?;
                    let mut net = HeadNet::new(
                        "qnet", layout, config.dqn.hidden, 32, 0.0, 3, 1.0, &mut rng,
                    );
                    let arch = net.arch_string();
                    load_checkpoint(&mut net, &arch, path)?;
                    evaluate_battery(&mut env, agent_name, seed, split, |_s, obs, _p| {
                        let (q, _) = net.forward(obs, None).expect("forward");
                        greedy_from_logits(&q)
                    })?
                }
                _ => {
                    let path = required_checkpoint(checkpoint)?;
                    let mut net = ActorCritic::new(
                        layout,
                        config.ppo.hidden,
                        config.ppo.gru_hidden,
                        config.ppo.gru_dropout,
                        3,
                        &mut rng,
                    );
                    let arch = net.arch_string();
                    load_checkpoint(&mut net, &arch, path)?;
                    evaluate_battery(&mut env, agent_name, seed, split, |_s, obs, _p| {
                        let (logits, _, _) = net.forward(obs, None).expect("forward");
                        greedy_from_logits(&logits)
                    })?
                }
            }
        }
        EnvKind::Heater => {
            let mut env = heater_env(config, &prepared, prepared.test_episodes.clone())?;
            let windows = config.heater.desired_windows.clone();
            match config.agent {
                AgentKind::Dqn => {
                    let path = required_checkpoint(checkpoint)?;
                    let mut net = HeadNet::new(
                        "qnet", layout, config.dqn.hidden, 32, 0.0, 2, 1.0, &mut rng,
                    );
                    let arch = net.arch_string();
                    load_checkpoint(&mut net, &arch, path)?;
                    evaluate_heater(&mut env, agent_name, seed, split, &windows, |_s, obs| {
                        let (q, _) = net.forward(obs, None).expect("forward");
                        greedy_from_logits(&q)
                    })?
                }
                AgentKind::Sac => {
                    let path = required_checkpoint(checkpoint)?;
                    let mut net = HeadNet::new(
                        "actor",
                        layout,
                        config.sac.hidden,
                        config.sac.gru_hidden,
                        config.sac.gru_dropout,
                        2,
                        0.01,
                        &mut rng,
                    );
                    let arch = net.arch_string();
                    load_checkpoint(&mut net, &arch, path)?;
                    evaluate_heater(&mut env, agent_name, seed, split, &windows, |_s, obs| {
                        let (logits, _) = net.forward(obs, None).expect("forward");
                        greedy_from_logits(&logits)
                    })?
                }
                _ => {
                    let path = required_checkpoint(checkpoint)?;
                    let mut net = ActorCritic::new(
                        layout,
                        config.ppo.hidden,
                        config.ppo.gru_hidden,
                        config.ppo.gru_dropout,
                        2,
                        &mut rng,
                    );
                    let arch = net.arch_string();
                    load_checkpoint(&mut net, &arch, path)?;
                    evaluate_heater(&mut env, agent_name, seed, split, &windows, |_s, obs| {
                        let (logits, _, _) = net.forward(obs, None).expect("forward");
                        greedy_from_logits(&logits)
                    })?
                }
            }
        }
    };

    std::fs::create_dir_all(out_dir)?;
    write_report_artifacts(&report, out_dir)?;
    Ok(report)
}

fn required_checkpoint(path: Option<&Path>) -> Result<&Path> {
    path.ok_or_else(|| Error::Config("this agent needs --checkpoint".into()))
}

fn load_report(dir: &Path) -> Result<RunReport> {
    let path = dir.join(REPORT_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("report parse: {e}")))
}

/// Paired monthly comparison rows for two reports.
pub fn comparison_rows(a: &RunReport, b: &RunReport) -> Result<Vec<String>> {
    if a.env != b.env || a.split != b.split {
        return Err(Error::Config(
            "reports under comparison must share the same env and split".into(),
        ));
    }
    let mut rows = Vec::new();
    for (metric, pick) in [
        ("cost", 0usize),
        ("import_kwh", 1),
        ("peak_kw", 2),
    ] {
        let mut diffs = Vec::new();
        for (ma, mb) in a.monthly.iter().zip(&b.monthly) {
            if ma.month != mb.month {
                return Err(Error::Config("reports cover different months".into()));
            }
            let (va, vb) = match pick {
                0 => (ma.cost, mb.cost),
                1 => (ma.import_kwh, mb.import_kwh),
                _ => (ma.peak_kw, mb.peak_kw),
            };
            // Positive difference = the first report is lower = improvement.
            diffs.push(vb - va);
        }
        let n = diffs.len();
        let med = median(&diffs);
        let p = match wilcoxon_signed_rank(&diffs) {
            Ok((_, p)) => format!("{p}"),
            Err(Error::Degenerate(_)) => "n/a".to_string(),
            Err(e) => return Err(e),
        };
        rows.push(format!(
            "{},{},{metric},{p},{med:.4},{n}",
            run_tag(a),
            run_tag(b)
        ));
    }
    Ok(rows)
}

fn run_tag(r: &RunReport) -> String {
    format!("{}-{}", r.agent, r.seed)
}

/// Pairwise signed-rank comparison across report directories.
pub fn cmd_compare(dirs: &[PathBuf], out: &Path) -> Result<()> {
    if dirs.len() < 2 {
        return Err(Error::Config("compare needs at least two report directories".into()));
    }
    let reports: Vec<RunReport> = dirs.iter().map(|d| load_report(d)).collect::<Result<_>>()?;
    let mut text = String::from("report_a,report_b,metric,p_value,median_improvement,n\n");
    for i in 0..reports.len() {
        for j in i + 1..reports.len() {
            for row in comparison_rows(&reports[i], &reports[j])? {
                writeln!(text, "{row}").unwrap();
            }
        }
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(out, text)?;
    Ok(())
}

/// Re-emit the metric CSVs for a run, optionally with comparison statistics
/// against a baseline run.
pub fn cmd_report(run: &Path, baseline: Option<&Path>, out: &Path) -> Result<()> {
    let report = load_report(run)?;
    std::fs::create_dir_all(out)?;
    write_monthly_csv(&report, &out.join("monthly.csv"))?;
    write_profile_csv(&report, &out.join("profile.csv"))?;
    let mut text = String::from("report_a,report_b,metric,p_value,median_improvement,n\n");
    if let Some(base) = baseline {
        let base_report = load_report(base)?;
        for row in comparison_rows(&report, &base_report)? {
            writeln!(text, "{row}").unwrap();
        }
    }
    std::fs::write(out.join("stats.csv"), text)?;
    Ok(())
}
