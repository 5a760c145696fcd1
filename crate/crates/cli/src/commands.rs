use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use surrconf::eval::{
    format_summary, monte_carlo, score_coverage, score_observed, score_observed_sets, score_sets, score_widths,
    ExperimentConfig, GridPoint, ReportFiles, StratumScore, Summary,
};
use surrconf::io;
use surrconf::pipeline::{run_categorical_with, run_methods_with, Method};
use surrconf::rng::child_seed;
use surrconf::simgen::{generate, DgpConfig, SimTruth};
use surrconf::{Dataset, Error, EstimandSpec, OutcomeKind, Setting};

use crate::{AnalyzeArgs, Command, ExperimentArgs, SimulateArgs};

/// Command failure with its exit code.
#[derive(Debug)]
pub enum Failure {
    /// Invalid flags or input data (exit 2).
    Usage(String),
    /// Failure while running (exit 1).
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::MixedDimensions(_)
            | Error::MissingnessViolation(_)
            | Error::EmptyArm { .. }
            | Error::CellTooSmall { .. }
            | Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. }
            | Error::NonFinite(_)
            | Error::LabelOutOfRange { .. }
            | Error::EmptyInput
            | Error::SettingMismatch(_)
            | Error::IncompatibleMethodSetting { .. }
            | Error::AlignmentError(_)
            | Error::Csv(_) => Failure::Usage(msg),
            _ => Failure::Runtime(msg),
        }
    }
}

type Outcome = Result<(), Failure>;

pub fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Analyze(a) => analyze(a),
        Command::Experiment(a) => experiment(a),
    }
}

/// `<dir>/<stem><suffix>.csv` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}.csv"))
}

fn simulate(a: SimulateArgs) -> Outcome {
    let mut cfg = DgpConfig::new(a.dgp, a.n, a.sigma_s, a.seed);
    cfg.setting = a.setting;
    cfg.validate()?;
    let (ds, truth) = generate(&cfg)?;
    let truth_path = a.truth.unwrap_or_else(|| sibling(&a.out, "_truth"));
    io::write_dataset(&a.out, &ds)?;
    io::write_truth(&truth_path, &truth)?;
    println!(
        "wrote {} rows ({} source, {} target) to {} and truth to {}",
        ds.len(),
        ds.n_source(),
        ds.n_target(),
        a.out.display(),
        truth_path.display()
    );
    Ok(())
}

/// Requested methods, or every method the setting supports.
fn methods(requested: &[Method], setting: Setting) -> Result<Vec<Method>, Failure> {
    if requested.is_empty() {
        return Ok(Method::ALL.into_iter().filter(|m| m.check(setting).is_ok()).collect());
    }
    for m in requested {
        m.check(setting)?;
    }
    Ok(requested.to_vec())
}

/// One summary row: metric values of one method and stratum, one per split.
struct Accum {
    method: Method,
    stratum: String,
    metric: &'static str,
    values: Vec<f64>,
}

#[derive(Default)]
struct Collector {
    rows: Vec<Accum>,
}

impl Collector {
    fn push(&mut self, method: Method, stratum: String, metric: &'static str, value: Option<f64>) {
        let Some(v) = value else { return };
        match self.rows.iter_mut().find(|r| r.method == method && r.stratum == stratum && r.metric == metric) {
            Some(r) => r.values.push(v),
            None => self.rows.push(Accum { method, stratum, metric, values: vec![v] }),
        }
    }

    fn add(&mut self, method: Method, scores: &[StratumScore], coverage: &'static str, width: &'static str) {
        for s in scores {
            if !coverage.is_empty() {
                self.push(method, s.stratum.to_string(), coverage, Some(s.coverage()));
            }
            self.push(method, s.stratum.to_string(), width, s.mean_width());
            if width == "width" {
                self.push(method, s.stratum.to_string(), "infinite_fraction", Some(s.infinite_fraction()));
            }
        }
    }

    /// Long format `method, stratum, metric, value, se`.
    fn csv(&self) -> String {
        let mut out = String::from("method,stratum,metric,value,se\n");
        for r in &self.rows {
            if let Some(s) = Summary::of(&r.values) {
                let _ = writeln!(out, "{},{},{},{},{}", r.method, r.stratum, r.metric, s.mean, s.se);
            }
        }
        out
    }

    fn table(&self) -> String {
        let mut out = format!("{:<8} {:<6} {:<20} {:>10} {:>8}\n", "method", "stratum", "metric", "value", "se");
        for r in &self.rows {
            if let Some(s) = Summary::of(&r.values) {
                let _ = writeln!(
                    out,
                    "{:<8} {:<6} {:<20} {:>10.4} {:>8.4}",
                    r.method.to_string(),
                    r.stratum,
                    r.metric,
                    s.mean,
                    s.se
                );
            }
        }
        out
    }
}

fn read_truth(path: &Path, ds: &Dataset) -> Result<SimTruth, Failure> {
    let t = io::read_truth(path)?;
    if t.len() != ds.len() {
        return Err(Failure::Usage(format!("truth table has {} rows, dataset has {}", t.len(), ds.len())));
    }
    Ok(t)
}

fn analyze(a: AnalyzeArgs) -> Outcome {
    if a.repeats == 0 {
        return Err(Failure::Usage("--repeats must be at least 1".into()));
    }
    let ds = io::read_dataset(&a.data, a.setting, a.outcome)?;
    let setting = a.setting.unwrap_or(ds.setting());
    let methods = methods(&a.method, setting)?;
    let truth = a.truth.as_deref().map(|p| read_truth(p, &ds)).transpose()?;
    let learner = a.learner.config();
    let mut summary = Collector::default();
    for r in 0..a.repeats as u64 {
        // the first split uses the seed itself so single runs are easy to reproduce
        let seed = if r == 0 { a.seed } else { child_seed(a.seed, r, 0) };
        match a.outcome {
            OutcomeKind::Continuous => {
                let spec = EstimandSpec::from_total(a.alpha)?;
                let an = run_methods_with(&ds, &spec, setting, &methods, seed, &learner, a.train_fraction)?;
                if r == 0 {
                    io::write_results(&a.out, &an.results, truth.as_ref())?;
                }
                for res in &an.results {
                    match &truth {
                        Some(t) => summary.add(res.method, &score_coverage(res, t)?, "coverage", "width"),
                        None => summary.add(res.method, &score_widths(res), "", "width"),
                    }
                    summary.add(res.method, &score_observed(res, &ds, &spec)?, "observed_coverage", "observed_width");
                }
            }
            OutcomeKind::Categorical => {
                let (_, results) =
                    run_categorical_with(&ds, a.alpha, setting, &methods, seed, &learner, a.train_fraction)?;
                if r == 0 {
                    io::write_set_results(&a.out, &results, truth.as_ref())?;
                }
                for res in &results {
                    if let Some(t) = &truth {
                        summary.add(res.method, &score_sets(res, t)?, "coverage", "set_size");
                    }
                    summary.add(res.method, &score_observed_sets(res, &ds)?, "observed_coverage", "observed_set_size");
                }
            }
        }
    }
    if a.repeats > 1 || a.summary.is_some() {
        let path = a.summary.clone().unwrap_or_else(|| sibling(&a.out, "_summary"));
        std::fs::write(&path, summary.csv()).map_err(Error::from)?;
        println!("summary over {} split(s) written to {}", a.repeats, path.display());
    }
    print!("{}", summary.table());
    println!("per-unit results written to {}", a.out.display());
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Outcome {
    let grid: Vec<GridPoint> =
        a.n.iter().flat_map(|&n| a.sigma_s.iter().map(move |&sigma_s| GridPoint { kind: a.dgp, n, sigma_s })).collect();
    let mut cfg = ExperimentConfig::new(grid, methods(&a.method, a.setting)?, a.reps, a.seed);
    cfg.parallelism = a.parallelism;
    cfg.alpha_total = a.alpha;
    cfg.setting = a.setting;
    cfg.learner = a.learner.config();
    cfg.train_fraction = a.train_fraction;
    cfg.validate()?;
    std::fs::create_dir_all(&a.out_dir).map_err(Error::from)?;
    let out = monte_carlo(&cfg).map_err(|e| match e {
        Error::ReplicateFailures { .. } => Failure::Runtime(e.to_string()),
        e => Failure::from(e),
    })?;
    let files = ReportFiles::in_dir(&a.out_dir);
    files.write(&out)?;
    print!("{}", format_summary(&out.reports));
    println!(
        "reports written to {}, {} and {}",
        files.report_csv.display(),
        files.replicates_csv.display(),
        files.report_json.display()
    );
    Ok(())
}
