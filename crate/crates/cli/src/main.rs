//! `surrconf`: simulate datasets, analyze CSV data and run Monte Carlo
//! experiments. Exit codes: 0 success, 1 runtime failure, 2 usage or
//! validation error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use surrconf::learners::{Basis, LearnerConfig};
use surrconf::pipeline::Method;
use surrconf::simgen::DgpKind;
use surrconf::{OutcomeKind, Setting};

/// Environment variable that overrides the default seed.
pub const SEED_ENV: &str = "SURRCONF_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "surrconf",
    version,
    about = "Surrogate-assisted conformal intervals for individual treatment effects"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a simulated dataset and its potential-outcome truth table.
    Simulate(SimulateArgs),
    /// Run conformal analyses on a dataset CSV and write per-unit intervals.
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo experiment and write aggregate reports.
    Experiment(ExperimentArgs),
}

fn parse_setting(s: &str) -> Result<Setting, String> {
    s.parse().map_err(|e: surrconf::Error| e.to_string())
}

fn parse_dgp(s: &str) -> Result<DgpKind, String> {
    s.parse().map_err(|e: surrconf::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: surrconf::Error| e.to_string())
}

fn parse_basis(s: &str) -> Result<Basis, String> {
    s.parse().map_err(|e: surrconf::Error| e.to_string())
}

fn parse_outcome(s: &str) -> Result<OutcomeKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "continuous" => Ok(OutcomeKind::Continuous),
        "categorical" => Ok(OutcomeKind::Categorical),
        other => Err(format!("unknown outcome kind {other}")),
    }
}

/// Nuisance-learner options shared by `analyze` and `experiment`.
#[derive(Debug, Clone, Args)]
pub struct LearnerArgs {
    /// Feature basis of every nuisance model: linear or quadratic.
    #[arg(long, default_value = "linear", value_parser = parse_basis)]
    pub basis: Basis,
    /// Ridge penalty per training row for propensity, quantile, mean and class models.
    #[arg(long, default_value_t = 1e-6)]
    pub ridge: f64,
    /// Ridge penalty per training row for the localized score CDF models.
    #[arg(long, default_value_t = 1e-2)]
    pub cdf_ridge: f64,
}

impl LearnerArgs {
    pub fn config(&self) -> LearnerConfig {
        LearnerConfig { basis: self.basis, ridge_per_obs: self.ridge, cdf_ridge_per_obs: self.cdf_ridge }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Flat `key = value` file of flag values; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Data-generating process: continuous, grouped or categorical.
    #[arg(long, default_value = "continuous", value_parser = parse_dgp)]
    pub dgp: DgpKind,
    /// Total sample size (at least 100).
    #[arg(long, default_value_t = 3000)]
    pub n: usize,
    /// Surrogate noise scale (positive).
    #[arg(long, default_value_t = 10.0)]
    pub sigma_s: f64,
    /// Random seed.
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    pub seed: u64,
    /// Surrogate availability: S1 (none), S2 (all units) or S3 (source units only).
    #[arg(long, default_value = "S2", value_parser = parse_setting)]
    pub setting: Setting,
    /// Dataset CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Truth CSV to write [default: <out stem>_truth.csv].
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Flat `key = value` file of flag values; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input dataset CSV: x1.., a, s1.. (optional), y (blank when d=0), d, group (optional).
    #[arg(long)]
    pub data: PathBuf,
    /// Truth CSV from `simulate`; adds coverage columns.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Comma-separated methods: wcqr, nosurr, science [default: all that the setting supports].
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub method: Vec<Method>,
    /// Total miscoverage; ITE intervals split it evenly between the two stages.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Surrogate setting [default: inferred from which rows carry surrogates].
    #[arg(long, value_parser = parse_setting)]
    pub setting: Option<Setting>,
    /// Outcome type: continuous or categorical.
    #[arg(long, default_value = "continuous", value_parser = parse_outcome)]
    pub outcome: OutcomeKind,
    /// Seed of the sample split.
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    pub seed: u64,
    /// Share of units used for training; the rest calibrates and is predicted.
    #[arg(long, default_value_t = 0.75)]
    pub train_fraction: f64,
    /// Number of random splits; metrics are averaged over them.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Per-unit results CSV (from the first split).
    #[arg(long)]
    pub out: PathBuf,
    /// Split-averaged summary CSV [default: <out stem>_summary.csv].
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub learner: LearnerArgs,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Flat `key = value` file of flag values; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Data-generating process: continuous, grouped or categorical.
    #[arg(long, default_value = "continuous", value_parser = parse_dgp)]
    pub dgp: DgpKind,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "3000")]
    pub n: Vec<usize>,
    /// Comma-separated surrogate noise scales.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub sigma_s: Vec<f64>,
    /// Monte Carlo replicates per design point (at least 2).
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// Base seed; replicate seeds derive from it.
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    pub seed: u64,
    /// Comma-separated methods: wcqr, nosurr, science [default: all that the setting supports].
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub method: Vec<Method>,
    /// Total miscoverage; ITE intervals split it evenly between the two stages.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Surrogate setting of the simulated data: S1, S2 or S3.
    #[arg(long, default_value = "S2", value_parser = parse_setting)]
    pub setting: Setting,
    /// Share of units used for training.
    #[arg(long, default_value_t = 0.75)]
    pub train_fraction: f64,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Directory for report.csv, replicates.csv and report.json.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub learner: LearnerArgs,
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let skip: &[&str] = if std::env::var_os(SEED_ENV).is_some() { &["seed"] } else { &[] };
    let args = match config::splice(raw, skip) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
