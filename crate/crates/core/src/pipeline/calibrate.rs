use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FoldAssignment, Interval, Setting};
use crate::eif::{
    candidate_grid, psi_counterfactual, psi_target, solve_quantile, weighted_cqr_quantile, EifUnit, QuantileSolution,
};
use crate::error::{Error, Result};
use crate::learners::Predictor;

use super::nuisance::{arm_ratio, NuisanceBundle};
use super::Method;

/// Calibrated score quantiles of one method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub method: Method,
    /// `r̂_{α,0}`, `r̂_{α,1}`.
    pub arm: [QuantileSolution; 2],
    /// `r̂_{γ,C}`.
    pub target: QuantileSolution,
}

impl Calibration {
    pub fn r_arm(&self) -> [f64; 2] {
        [self.arm[0].r_hat, self.arm[1].r_hat]
    }

    pub fn has_infinite(&self) -> bool {
        !(self.arm[0].r_hat.is_finite() && self.arm[1].r_hat.is_finite() && self.target.r_hat.is_finite())
    }
}

fn weighted(scores: &[f64], weights: &[f64], level: f64) -> Result<QuantileSolution> {
    if scores.is_empty() {
        return Err(Error::NoScoredUnits);
    }
    let r = weighted_cqr_quantile(scores, weights, level)?;
    Ok(QuantileSolution { r_hat: r, attained: r.is_finite() })
}

/// Efficient-estimator quantile; when every score is infinite (an upstream
/// `+∞` quantile) the result is `+∞` rather than an error.
fn efficient(units: &[EifUnit], psi: impl Fn(f64, &EifUnit) -> Result<f64>) -> Result<QuantileSolution> {
    let scores: Vec<f64> = units.iter().filter_map(|u| u.score).collect();
    if scores.is_empty() {
        return Err(Error::NoScoredUnits);
    }
    if scores.iter().all(|s| !s.is_finite()) {
        return Ok(QuantileSolution { r_hat: f64::INFINITY, attained: false });
    }
    solve_quantile(units, psi, &candidate_grid(scores))
}

/// Influence-function inputs of every calibration unit for arm `a`.
pub fn arm_units(
    ds: &Dataset,
    rows: &[usize],
    bundle: &NuisanceBundle,
    a: u8,
    surrogate: bool,
) -> Result<Vec<EifUnit>> {
    let src = &bundle.source;
    let fb = bundle.features();
    let cdf = &bundle.arm_cdf[a as usize];
    rows.iter()
        .map(|&i| {
            let o = ds.get(i);
            let score = if o.a == a && o.d == 1 { Some(src.arm_score(o, i)?) } else { None };
            let m = cdf.m.predict_row(&fb.base(o));
            // m̃ only enters through units observed on arm a
            let m_tilde = match (&cdf.m_tilde, surrogate) {
                (Some(model), true) if o.a == a => Some(model.predict_row(&fb.with_surrogate(o, i)?)),
                (Some(_), true) => Some(m),
                (None, true) => return Err(Error::SettingMismatch(i)),
                (_, false) => None,
            };
            Ok(EifUnit { id: i, a: o.a, d: o.d, score, w: src.weights(o), m, m_tilde })
        })
        .collect()
}

/// Influence-function inputs of every calibration unit for the nested
/// target quantile, with pseudo-outcomes built from `r_arm`.
pub fn target_units(
    ds: &Dataset,
    rows: &[usize],
    bundle: &NuisanceBundle,
    r_arm: [f64; 2],
    surrogate: bool,
) -> Result<Vec<EifUnit>> {
    let src = &bundle.source;
    let fb = bundle.features();
    let stage = bundle.target_stage(surrogate)?;
    rows.iter()
        .map(|&i| {
            let o = ds.get(i);
            let score = if o.d == 1 {
                let c: Interval = src.pseudo_outcome(o, i, r_arm)?;
                Some(stage.score(fb, o, i, &c)?)
            } else {
                None
            };
            let (m, m_tilde) = stage.cdf_at(fb, o, i)?;
            Ok(EifUnit { id: i, a: o.a, d: o.d, score, w: src.weights(o), m, m_tilde })
        })
        .collect()
}

/// Calibrates the per-arm and nested quantiles on `I2`.
pub fn calibrate(ds: &Dataset, folds: &FoldAssignment, bundle: &NuisanceBundle, method: Method) -> Result<Calibration> {
    method.check(bundle.setting)?;
    bundle.verify_provenance(folds)?;
    let spec = bundle.spec();
    let rows = &folds.i2;
    let surrogate = method == Method::Science;
    let eif_setting = if surrogate { Setting::S2 } else { Setting::S1 };

    let mut arm = [QuantileSolution { r_hat: f64::INFINITY, attained: false }; 2];
    for a in 0..2u8 {
        let units = arm_units(ds, rows, bundle, a, surrogate)?;
        arm[a as usize] = match method {
            Method::Wcqr => {
                let scored: Vec<&EifUnit> = units.iter().filter(|u| u.score.is_some()).collect();
                let scores: Vec<f64> = scored.iter().filter_map(|u| u.score).collect();
                let weights: Vec<f64> = scored.iter().map(|u| arm_ratio(&u.w, a)).collect();
                weighted(&scores, &weights, spec.alpha)?
            }
            Method::NoSurr | Method::Science => {
                efficient(&units, |r, u| psi_counterfactual(r, u, a, eif_setting, spec.alpha))?
            }
        };
    }
    let r_arm = [arm[0].r_hat, arm[1].r_hat];
    let units = target_units(ds, rows, bundle, r_arm, surrogate)?;
    let target = match method {
        Method::Wcqr => {
            let scored: Vec<&EifUnit> = units.iter().filter(|u| u.score.is_some()).collect();
            let scores: Vec<f64> = scored.iter().filter_map(|u| u.score).collect();
            let weights: Vec<f64> = scored.iter().map(|u| u.w.pi_d).collect();
            weighted(&scores, &weights, spec.gamma)?
        }
        Method::NoSurr | Method::Science => efficient(&units, |r, u| psi_target(r, u, eif_setting, spec.gamma))?,
    };
    Ok(Calibration { method, arm, target })
}
