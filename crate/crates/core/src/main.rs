use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use farm_dispatch::cli;
use farm_dispatch::config::{output_root, CliOverrides, RawConfig};

#[derive(Parser)]
#[command(
    name = "farm-dispatch",
    about = "Battery and water-heater load scheduling: data, forecasts, agents, reports",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic hourly year of load/PV/tariff data as CSV.
    GenData {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check that a data file satisfies the schema and calendar invariants.
    ValidateData { file: PathBuf },
    /// Fit residual forecast bands and the feature normalizer on a data file.
    Calibrate {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated training months, e.g. 1,7
        #[arg(long, value_delimiter = ',', default_values_t = [1u8, 7u8])]
        train_months: Vec<u8>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an agent; artifacts land under <out>/<agent>/<seed>/.
    Train(RunArgs),
    /// Evaluate a checkpoint on the test months and emit report CSVs.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Trained checkpoint (omit for the rule policy).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Where the report files go (defaults to <out>/<agent>/eval).
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
    /// Pairwise signed-rank comparison of two or more report directories.
    Compare {
        /// Directories each containing a report.json
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "stats.csv")]
        out: PathBuf,
    },
    /// Re-emit monthly/profile/stats CSVs for a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run-config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    agent: Option<String>,
    /// Comma-separated seeds, e.g. 1,2,3
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Single seed shorthand.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    /// Hourly CSV data file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Generate data in-process from this seed instead of reading a file.
    #[arg(long)]
    synthetic_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Forecast block channels: one (medians) or all (percentile fan).
    #[arg(long)]
    fa_mode: Option<String>,
    /// Allow agent/env pairings outside the designed experiments.
    #[arg(long, default_value_t = false)]
    force: bool,
}

impl RunArgs {
    fn resolve(&self) -> farm_dispatch::Result<farm_dispatch::config::RunConfig> {
        let raw = match &self.config {
            Some(path) => RawConfig::from_file(path)?,
            None => RawConfig::default(),
        };
        let seeds = match (&self.seeds, self.seed) {
            (Some(list), _) => Some(list.clone()),
            (None, Some(s)) => Some(vec![s]),
            (None, None) => None,
        };
        raw.resolve(&CliOverrides {
            env: self.env.clone(),
            agent: self.agent.clone(),
            seeds,
            steps: self.steps,
            out_dir: self.out.clone(),
            data_csv: self.data.clone(),
            synthetic_seed: self.synthetic_seed,
            fa_mode: self.fa_mode.clone(),
            force: self.force,
        })
    }
}

fn run() -> farm_dispatch::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData { seed, out } => {
            cli::cmd_gen_data(seed, &out)?;
            println!("wrote {}", out.display());
        }
        Command::ValidateData { file } => {
            let summary = cli::cmd_validate_data(&file)?;
            println!("{summary}");
        }
        Command::Calibrate { data, train_months, out } => {
            cli::cmd_calibrate(&data, &train_months, &out)?;
            println!("wrote {} and {}", out.display(), cli::sidecar_path(&out).display());
        }
        Command::Train(args) => {
            let config = args.resolve()?;
            let dirs = cli::cmd_train(&config)?;
            for d in dirs {
                println!("run complete: {}", d.display());
            }
        }
        Command::Evaluate { run, checkpoint, report_dir } => {
            let config = run.resolve()?;
            let out = report_dir.unwrap_or_else(|| {
                output_root(Some(config.out_dir.clone()))
                    .join(config.agent.as_str())
                    .join("eval")
            });
            cli::cmd_evaluate(&config, checkpoint.as_deref(), &out)?;
            println!("report written to {}", out.display());
        }
        Command::Compare { dirs, out } => {
            cli::cmd_compare(&dirs, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Report { run, baseline, out } => {
            cli::cmd_report(&run, baseline.as_deref(), &out)?;
            println!("wrote reports under {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
