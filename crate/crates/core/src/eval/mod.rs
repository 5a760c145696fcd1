//! Coverage and width metrics by stratum, and the Monte Carlo harness that
//! aggregates them over replicates.

mod report;

pub use report::{format_summary, write_replicates_csv, write_report_csv, write_report_json, ReportFiles};

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::data::{Dataset, EstimandSpec, Setting};
use crate::error::{Error, Result};
use crate::learners::LearnerConfig;
use crate::pipeline::{
    run_categorical_with, run_methods_with, CategoricalResult, ConformalResult, Method, DEFAULT_TRAIN_FRACTION,
};
use crate::rng::child_seed;
use crate::simgen::{generate, DgpConfig, DgpKind, SimTruth};

/// Largest tolerated share of failed replicates per grid point.
pub const MAX_FAILURE_RATE: f64 = 0.05;

const DATA_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;

/// Evaluation subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
pub enum Stratum {
    All,
    /// `D = 1`.
    Source,
    /// `D = 0`.
    Target,
    Group(u32),
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stratum::All => f.write_str("all"),
            Stratum::Source => f.write_str("D=1"),
            Stratum::Target => f.write_str("D=0"),
            Stratum::Group(g) => write!(f, "G={g}"),
        }
    }
}

impl Serialize for Stratum {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Coverage and width tallies of one stratum in one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StratumScore {
    pub stratum: Stratum,
    pub units: usize,
    pub covered: usize,
    /// Units with a finite interval (empty intervals count, with width 0).
    pub finite: usize,
    pub width_sum: f64,
}

impl StratumScore {
    fn new(stratum: Stratum) -> Self {
        StratumScore { stratum, units: 0, covered: 0, finite: 0, width_sum: 0.0 }
    }

    pub fn coverage(&self) -> f64 {
        self.covered as f64 / self.units as f64
    }

    /// Mean width over finite intervals; `None` when every interval is unbounded.
    pub fn mean_width(&self) -> Option<f64> {
        (self.finite > 0).then(|| self.width_sum / self.finite as f64)
    }

    pub fn infinite_fraction(&self) -> f64 {
        (self.units - self.finite) as f64 / self.units as f64
    }
}

/// One scored unit: source flag, group, coverage and width (`None` if infinite).
struct Scored {
    d: u8,
    group: Option<u32>,
    covered: bool,
    width: Option<f64>,
}

fn tally(items: impl IntoIterator<Item = Scored>) -> Vec<StratumScore> {
    let mut all = StratumScore::new(Stratum::All);
    let mut by_d = [StratumScore::new(Stratum::Target), StratumScore::new(Stratum::Source)];
    let mut groups: Vec<StratumScore> = Vec::new();
    for it in items {
        let mut slots: Vec<&mut StratumScore> = vec![&mut all];
        let [target, source] = &mut by_d;
        slots.push(if it.d == 1 { source } else { target });
        if let Some(g) = it.group {
            let pos = match groups.iter().position(|s| s.stratum == Stratum::Group(g)) {
                Some(p) => p,
                None => {
                    groups.push(StratumScore::new(Stratum::Group(g)));
                    groups.len() - 1
                }
            };
            slots.push(&mut groups[pos]);
        }
        for s in slots {
            s.units += 1;
            s.covered += it.covered as usize;
            if let Some(w) = it.width {
                s.finite += 1;
                s.width_sum += w;
            }
        }
    }
    groups.sort_by_key(|s| s.stratum);
    let [target, source] = by_d;
    [all, source, target].into_iter().chain(groups).filter(|s| s.units > 0).collect()
}

fn aligned(id: usize, truth: &SimTruth) -> Result<()> {
    if id >= truth.len() {
        return Err(Error::AlignmentError(format!("unit {id} beyond truth table of {} units", truth.len())));
    }
    Ok(())
}

/// ITE coverage per stratum: covered iff `θ ∈ [lower, upper]`; unbounded
/// intervals count as covered but stay out of the mean width; an empty
/// interval covers nothing and has width 0.
pub fn score_coverage(result: &ConformalResult, truth: &SimTruth) -> Result<Vec<StratumScore>> {
    let items = result
        .units
        .iter()
        .map(|u| {
            aligned(u.id, truth)?;
            let theta = truth.theta[u.id];
            Ok(match u.ite {
                Some(iv) => Scored {
                    d: u.d,
                    group: u.group,
                    covered: iv.contains(theta),
                    width: iv.is_finite().then(|| iv.width()),
                },
                None => Scored { d: u.d, group: u.group, covered: false, width: Some(0.0) },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(tally(items))
}

/// Label coverage per stratum for prediction sets of `Y(a)` on each unit's
/// own arm; width is the set cardinality.
pub fn score_sets(result: &CategoricalResult, truth: &SimTruth) -> Result<Vec<StratumScore>> {
    let items = result
        .units
        .iter()
        .map(|u| {
            aligned(u.id, truth)?;
            let y = truth.outcome(u.id, u.a);
            Ok(Scored { d: u.d, group: u.group, covered: u.set.contains(y as u32), width: Some(u.set.len() as f64) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(tally(items))
}

/// ITE width per stratum without truth; coverage counts stay at zero.
pub fn score_widths(result: &ConformalResult) -> Vec<StratumScore> {
    tally(result.units.iter().map(|u| Scored {
        d: u.d,
        group: u.group,
        covered: false,
        width: match u.ite {
            Some(iv) => iv.is_finite().then(|| iv.width()),
            None => Some(0.0),
        },
    }))
}

/// Coverage of observed outcomes: on source units, whether `u(Y)` lies in
/// the interval `C_A(W)` of the unit's own arm.
pub fn score_observed(result: &ConformalResult, ds: &Dataset, spec: &EstimandSpec) -> Result<Vec<StratumScore>> {
    let items = result
        .units
        .iter()
        .filter(|u| u.d == 1)
        .map(|u| {
            if u.id >= ds.len() {
                return Err(Error::AlignmentError(format!("unit {u} beyond dataset of {} rows", ds.len(), u = u.id)));
            }
            let y = ds.get(u.id).y.ok_or(Error::MissingScore(u.id))?;
            let y = spec.transform.apply(y)?;
            Ok(match u.counterfactual[u.a as usize] {
                Some(iv) => {
                    Scored { d: 1, group: u.group, covered: iv.contains(y), width: iv.is_finite().then(|| iv.width()) }
                }
                None => Scored { d: 1, group: u.group, covered: false, width: Some(0.0) },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(tally(items))
}

/// Observed-label coverage of prediction sets on source units.
pub fn score_observed_sets(result: &CategoricalResult, ds: &Dataset) -> Result<Vec<StratumScore>> {
    let items = result
        .units
        .iter()
        .filter(|u| u.d == 1)
        .map(|u| {
            let y = ds.observations().get(u.id).and_then(|o| o.y).ok_or(Error::MissingScore(u.id))?;
            Ok(Scored { d: 1, group: u.group, covered: u.set.contains(y as u32), width: Some(u.set.len() as f64) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(tally(items))
}

/// One design point of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub kind: DgpKind,
    pub n: usize,
    pub sigma_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid: Vec<GridPoint>,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub base_seed: u64,
    /// Worker cap; `None` uses every available core.
    pub parallelism: Option<usize>,
    /// Total miscoverage; split evenly between the two stages for ITE
    /// intervals, used whole for categorical sets.
    pub alpha_total: f64,
    pub setting: Setting,
    pub learner: LearnerConfig,
    pub train_fraction: f64,
}

impl ExperimentConfig {
    pub fn new(grid: Vec<GridPoint>, methods: Vec<Method>, reps: usize, base_seed: u64) -> Self {
        ExperimentConfig {
            grid,
            methods,
            reps,
            base_seed,
            parallelism: None,
            alpha_total: 0.05,
            setting: Setting::S2,
            learner: LearnerConfig::default(),
            train_fraction: DEFAULT_TRAIN_FRACTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(Error::InvalidParameter(format!("reps = {} below 2", self.reps)));
        }
        if self.grid.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidParameter("empty grid or method list".into()));
        }
        for m in &self.methods {
            m.check(self.setting)?;
        }
        for g in &self.grid {
            self.dgp(g, 0).validate()?;
        }
        EstimandSpec::from_total(self.alpha_total)?;
        Ok(())
    }

    /// Seeds are counter-derived from `(base_seed, replicate)` and shared by
    /// every grid point, so design points are compared on common draws.
    pub fn data_seed(&self, replicate: u64) -> u64 {
        child_seed(self.base_seed, replicate, DATA_STREAM)
    }

    pub fn split_seed(&self, replicate: u64) -> u64 {
        child_seed(self.base_seed, replicate, SPLIT_STREAM)
    }

    fn dgp(&self, g: &GridPoint, replicate: u64) -> DgpConfig {
        let mut cfg = DgpConfig::new(g.kind, g.n, g.sigma_s, self.data_seed(replicate));
        cfg.setting = self.setting;
        cfg
    }
}

/// Scores of one method, stratum and replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub grid: usize,
    pub replicate: u64,
    pub seed: u64,
    pub method: Method,
    pub score: StratumScore,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateFailure {
    pub grid: usize,
    pub replicate: u64,
    pub error: String,
}

/// Runs every method on one replicate of one grid point.
pub fn run_replicate(cfg: &ExperimentConfig, grid: usize, replicate: u64) -> Result<Vec<ReplicateRow>> {
    let point = &cfg.grid[grid];
    let dgp = cfg.dgp(point, replicate);
    let (ds, truth) = generate(&dgp)?;
    let split = cfg.split_seed(replicate);
    let row = |method: Method, score: StratumScore| ReplicateRow { grid, replicate, seed: dgp.seed, method, score };
    let mut rows = Vec::new();
    if point.kind == DgpKind::Categorical {
        let (_, results) = run_categorical_with(
            &ds,
            cfg.alpha_total,
            cfg.setting,
            &cfg.methods,
            split,
            &cfg.learner,
            cfg.train_fraction,
        )?;
        for res in &results {
            rows.extend(score_sets(res, &truth)?.into_iter().map(|s| row(res.method, s)));
        }
    } else {
        let spec = EstimandSpec::from_total(cfg.alpha_total)?;
        let an = run_methods_with(&ds, &spec, cfg.setting, &cfg.methods, split, &cfg.learner, cfg.train_fraction)?;
        for res in &an.results {
            rows.extend(score_coverage(res, &truth)?.into_iter().map(|s| row(res.method, s)));
        }
    }
    Ok(rows)
}

/// Mean and Monte Carlo standard error across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl Summary {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Summary> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary { mean, se, count: n })
    }
}

/// Aggregates of one (method, stratum) at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumSummary {
    pub method: Method,
    pub stratum: Stratum,
    pub coverage: Summary,
    /// Over replicates with at least one finite interval; `None` if there are none.
    pub width: Option<Summary>,
    pub infinite_fraction: Summary,
    pub units: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub point: GridPoint,
    pub replicates: usize,
    pub failures: usize,
    pub rows: Vec<StratumSummary>,
}

impl CoverageReport {
    pub fn get(&self, method: Method, stratum: Stratum) -> Option<&StratumSummary> {
        self.rows.iter().find(|r| r.method == method && r.stratum == stratum)
    }
}

/// Aggregates replicate rows of grid point `grid`.
pub fn aggregate(point: GridPoint, grid: usize, rows: &[ReplicateRow], failures: usize) -> CoverageReport {
    let mut keys: Vec<(Method, Stratum)> =
        rows.iter().filter(|r| r.grid == grid).map(|r| (r.method, r.score.stratum)).collect();
    keys.sort_unstable();
    keys.dedup();
    let mut reps: Vec<u64> = rows.iter().filter(|r| r.grid == grid).map(|r| r.replicate).collect();
    reps.sort_unstable();
    reps.dedup();
    let summaries = keys
        .into_iter()
        .filter_map(|(method, stratum)| {
            let sel: Vec<&StratumScore> = rows
                .iter()
                .filter(|r| r.grid == grid && r.method == method && r.score.stratum == stratum)
                .map(|r| &r.score)
                .collect();
            let cov: Vec<f64> = sel.iter().map(|s| s.coverage()).collect();
            let width: Vec<f64> = sel.iter().filter_map(|s| s.mean_width()).collect();
            let inf: Vec<f64> = sel.iter().map(|s| s.infinite_fraction()).collect();
            let units: Vec<f64> = sel.iter().map(|s| s.units as f64).collect();
            Some(StratumSummary {
                method,
                stratum,
                coverage: Summary::of(&cov)?,
                width: Summary::of(&width),
                infinite_fraction: Summary::of(&inf)?,
                units: Summary::of(&units)?,
            })
        })
        .collect();
    CoverageReport { point, replicates: reps.len(), failures, rows: summaries }
}

/// Per-replicate comparison of two methods on one stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Paired {
    pub summary: Summary,
    /// SE had the two methods been run on independent replicates.
    pub unpaired_se: f64,
}

/// Summarizes `combine(metric(a), metric(b))` over replicates where both
/// metrics are defined.
pub fn paired(
    rows: &[ReplicateRow],
    grid: usize,
    stratum: Stratum,
    a: Method,
    b: Method,
    metric: impl Fn(&StratumScore) -> Option<f64>,
    combine: impl Fn(f64, f64) -> f64,
) -> Option<Paired> {
    let pick = |m: Method| -> Vec<(u64, Option<f64>)> {
        rows.iter()
            .filter(|r| r.grid == grid && r.method == m && r.score.stratum == stratum)
            .map(|r| (r.replicate, metric(&r.score)))
            .collect()
    };
    let (ra, rb) = (pick(a), pick(b));
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut diffs = Vec::new();
    for &(rep, va) in &ra {
        if let (Some(va), Some((_, Some(vb)))) = (va, rb.iter().find(|(r, _)| *r == rep)) {
            xs.push(va);
            ys.push(*vb);
            diffs.push(combine(va, *vb));
        }
    }
    let summary = Summary::of(&diffs)?;
    let (sx, sy) = (Summary::of(&xs)?, Summary::of(&ys)?);
    Some(Paired { summary, unpaired_se: (sx.se.powi(2) + sy.se.powi(2)).sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutput {
    pub reports: Vec<CoverageReport>,
    pub replicates: Vec<ReplicateRow>,
    pub failures: Vec<ReplicateFailure>,
}

/// Runs `reps` replicates per grid point in parallel. Failed replicates are
/// recorded; the run fails only when more than 5% of a grid point's
/// replicates fail.
pub fn monte_carlo(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let jobs: Vec<(usize, u64)> = (0..cfg.grid.len()).flat_map(|g| (0..cfg.reps as u64).map(move |r| (g, r))).collect();
    type Outcome = ((usize, u64), Result<Vec<ReplicateRow>>);
    let outcomes: Vec<Outcome> =
        pool.install(|| jobs.par_iter().map(|&(g, r)| ((g, r), run_replicate(cfg, g, r))).collect());

    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for ((grid, replicate), out) in outcomes {
        match out {
            Ok(rows) => replicates.extend(rows),
            Err(e) => failures.push(ReplicateFailure { grid, replicate, error: e.to_string() }),
        }
    }
    let mut reports = Vec::with_capacity(cfg.grid.len());
    for (g, point) in cfg.grid.iter().enumerate() {
        let failed: Vec<&ReplicateFailure> = failures.iter().filter(|f| f.grid == g).collect();
        if failed.len() as f64 > MAX_FAILURE_RATE * cfg.reps as f64 {
            return Err(Error::ReplicateFailures {
                failed: failed.len(),
                total: cfg.reps,
                first: failed[0].error.clone(),
            });
        }
        reports.push(aggregate(*point, g, &replicates, failed.len()));
    }
    Ok(ExperimentOutput { reports, replicates, failures })
}
