//! End-to-end orchestration: nuisance fitting on the training fold,
//! calibration on the held-out fold, and interval construction for the
//! counterfactual outcomes, the ITE of source units and the nested ITE
//! interval of target units.

mod calibrate;
mod categorical;
mod features;
mod nuisance;

pub use calibrate::{arm_units, calibrate, target_units, Calibration};
pub use categorical::{
    calibrate_categorical, fit_categorical, predict_sets, run_categorical, run_categorical_with, CategoricalBundle,
    CategoricalCalibration, CategoricalPrediction, CategoricalResult,
};
pub use features::FeatureBuilder;
pub use nuisance::{
    arm_ratio, check_rows, fit_nuisances, LocalizedCdf, NuisanceBundle, Provenance, SourceModels, TargetStage,
};

use serde::{Deserialize, Serialize};

use crate::data::{split_folds, Dataset, EstimandSpec, FoldAssignment, Interval, Observation, Setting};
use crate::error::{Error, Result};
use crate::learners::LearnerConfig;
use crate::scores::interval_invert;

/// Training share of the data; the rest calibrates.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.75;

/// Calibration strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Likelihood-ratio weighted split-conformal quantiles.
    Wcqr,
    /// Efficient estimator without surrogates.
    NoSurr,
    /// Efficient estimator with surrogates.
    Science,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Wcqr, Method::NoSurr, Method::Science];

    pub fn name(self) -> &'static str {
        match self {
            Method::Wcqr => "wcqr",
            Method::NoSurr => "nosurr",
            Method::Science => "science",
        }
    }

    /// The surrogate-assisted estimator needs surrogates on every unit.
    pub fn check(self, setting: Setting) -> Result<()> {
        if self == Method::Science && setting.effective() != Setting::S2 {
            return Err(Error::IncompatibleMethodSetting { method: self.name().into(), setting: setting.to_string() });
        }
        Ok(())
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wcqr" => Ok(Method::Wcqr),
            "nosurr" | "no-surr" | "no_surr" => Ok(Method::NoSurr),
            "science" => Ok(Method::Science),
            other => Err(Error::InvalidParameter(format!("unknown method {other}"))),
        }
    }
}

/// Intervals for one test unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitPrediction {
    pub id: usize,
    pub a: u8,
    pub d: u8,
    pub group: Option<u32>,
    /// `C_0`, `C_1` at the unit's covariates; `None` when empty.
    pub counterfactual: [Option<Interval>; 2],
    /// ITE interval; `None` when empty.
    pub ite: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalResult {
    pub method: Method,
    pub calibration: Calibration,
    pub units: Vec<UnitPrediction>,
}

impl ConformalResult {
    /// Set when a calibrated quantile is `+∞`, making some intervals unbounded.
    pub fn has_infinite(&self) -> bool {
        self.calibration.has_infinite()
    }
}

/// Builds intervals for `(id, observation)` pairs. Source units get the
/// counterfactual-based ITE interval, target units the nested one.
pub fn predict_intervals<'a>(
    units: impl IntoIterator<Item = (usize, &'a Observation)>,
    bundle: &NuisanceBundle,
    cal: &Calibration,
) -> Result<ConformalResult> {
    let surrogate = cal.method == Method::Science;
    let stage = bundle.target_stage(surrogate)?;
    let fb = bundle.features();
    let src = &bundle.source;
    let r = cal.r_arm();
    let mut out = Vec::new();
    for (id, o) in units {
        if bundle.uses_surrogates() && o.s.is_none() {
            return Err(Error::SettingMismatch(id));
        }
        let counterfactual = [src.counterfactual(0, o, r[0]), src.counterfactual(1, o, r[1])];
        let ite = if o.d == 1 {
            src.ite_interval(o, id, r)?
        } else {
            let (l, u) = stage.endpoints(fb, o, id)?;
            interval_invert(l, u, cal.target.r_hat)
        };
        out.push(UnitPrediction { id, a: o.a, d: o.d, group: o.group, counterfactual, ite });
    }
    Ok(ConformalResult { method: cal.method, calibration: *cal, units: out })
}

/// Results of several methods sharing one split and one nuisance bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub folds: FoldAssignment,
    pub results: Vec<ConformalResult>,
}

/// Splits, fits once and calibrates each method; predictions cover `I2`.
pub fn run_methods(
    ds: &Dataset,
    spec: &EstimandSpec,
    setting: Setting,
    methods: &[Method],
    seed: u64,
    learner: &LearnerConfig,
) -> Result<Analysis> {
    run_methods_with(ds, spec, setting, methods, seed, learner, DEFAULT_TRAIN_FRACTION)
}

pub fn run_methods_with(
    ds: &Dataset,
    spec: &EstimandSpec,
    setting: Setting,
    methods: &[Method],
    seed: u64,
    learner: &LearnerConfig,
    train_fraction: f64,
) -> Result<Analysis> {
    for m in methods {
        m.check(setting)?;
    }
    let folds = split_folds(ds, train_fraction, seed)?;
    let bundle = fit_nuisances(ds, &folds, spec, setting, learner)?;
    let results = methods
        .iter()
        .map(|&m| {
            let cal = calibrate(ds, &folds, &bundle, m)?;
            predict_intervals(folds.i2.iter().map(|&i| (i, ds.get(i))), &bundle, &cal)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Analysis { folds, results })
}

/// Single-method convenience wrapper around [`run_methods`].
pub fn run_method(
    ds: &Dataset,
    spec: &EstimandSpec,
    setting: Setting,
    method: Method,
    seed: u64,
    learner: &LearnerConfig,
) -> Result<ConformalResult> {
    let mut a = run_methods(ds, spec, setting, &[method], seed, learner)?;
    Ok(a.results.pop().expect("one method requested"))
}
