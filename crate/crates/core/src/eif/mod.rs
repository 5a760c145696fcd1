//! Efficient influence functions for the counterfactual score quantiles and
//! the nested target-stage quantile, plus the moment-condition solver.

mod efficiency;
mod lemma;
mod solve;

pub use efficiency::{variance_gain_mc, GainEstimate, GainOracle, OracleUnit};
pub use lemma::{lemma_dr_check, ArmOutcomes, DiscreteDist, LemmaCheck, NuisanceOverride};
pub use solve::{candidate_grid, solve_quantile, weighted_cqr_quantile, QuantileSolution};

use serde::{Deserialize, Serialize};

use crate::data::Setting;
use crate::error::{Error, Result};
use crate::learners::clip_prob;

/// Which quantile an influence function targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    Arm0,
    Arm1,
    /// Target-stage quantile of the pseudo-outcome scores.
    Nested,
}

impl Target {
    pub fn arm(a: u8) -> Target {
        if a == 1 {
            Target::Arm1
        } else {
            Target::Arm0
        }
    }
}

/// Propensities entering the influence-function weights, clipped to
/// `[1e-3, 1 - 1e-3]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EifWeights {
    pub e_a: f64,
    pub pi_a: f64,
    pub e_d0: f64,
    pub e_d1: f64,
    pub e_d: f64,
    pub pi_d: f64,
}

impl EifWeights {
    /// `e_d0`, `e_d1` are `P(D=1 | x, A=a)`; `e_d` is the source probability
    /// given the target-stage covariates.
    pub fn new(e_a: f64, e_d0: f64, e_d1: f64, e_d: f64) -> Self {
        let e_a = clip_prob(e_a);
        let e_d = clip_prob(e_d);
        EifWeights {
            e_a,
            pi_a: (1.0 - e_a) / e_a,
            e_d0: clip_prob(e_d0),
            e_d1: clip_prob(e_d1),
            e_d,
            pi_d: (1.0 - e_d) / e_d,
        }
    }

    /// Weights without clipping, for oracle computations with exact
    /// propensities (which may be exactly one).
    pub fn exact(e_a: f64, e_d0: f64, e_d1: f64, e_d: f64) -> Self {
        EifWeights { e_a, pi_a: (1.0 - e_a) / e_a, e_d0, e_d1, e_d, pi_d: (1.0 - e_d) / e_d }
    }
}

/// One unit's inputs to an influence function: treatment, source indicator,
/// optional score, weights and the localized CDF predictions `m`, `m̃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EifUnit {
    pub id: usize,
    pub a: u8,
    pub d: u8,
    pub score: Option<f64>,
    pub w: EifWeights,
    pub m: f64,
    pub m_tilde: Option<f64>,
}

fn surrogate_cdf(unit: &EifUnit, setting: Setting) -> Result<Option<f64>> {
    match setting.effective() {
        Setting::S2 => {
            unit.m_tilde.map(Some).ok_or_else(|| Error::InvalidParameter(format!("unit {} lacks m̃ under S2", unit.id)))
        }
        _ => Ok(None),
    }
}

fn indicator(score: f64, r: f64) -> f64 {
    if score <= r {
        1.0
    } else {
        0.0
    }
}

/// Influence function for the `(1-α)` quantile of arm `a`'s score on the
/// source units of the opposite arm.
pub fn psi_counterfactual(r: f64, unit: &EifUnit, arm: u8, setting: Setting, alpha: f64) -> Result<f64> {
    let w = &unit.w;
    let d = unit.d as f64;
    let in_arm = if unit.a == arm { 1.0 } else { 0.0 };
    let (scale, ratio) = if arm == 1 {
        (w.pi_a * w.e_d0, w.pi_a * w.e_d0 / w.e_d1)
    } else {
        (w.e_d1 / w.pi_a, w.e_d1 / (w.pi_a * w.e_d0))
    };
    let first = d * (1.0 - in_arm) * (unit.m - (1.0 - alpha));
    let ind =
        if unit.a == arm && unit.d == 1 { indicator(unit.score.ok_or(Error::MissingScore(unit.id))?, r) } else { 0.0 };
    Ok(match surrogate_cdf(unit, setting)? {
        None => first + in_arm * d * ratio * (ind - unit.m),
        Some(mt) => first + in_arm * scale * (mt - unit.m) + in_arm * d * ratio * (ind - mt),
    })
}

/// Influence function for the `(1-γ)` quantile of the pseudo-outcome scores
/// on target units.
pub fn psi_target(r: f64, unit: &EifUnit, setting: Setting, gamma: f64) -> Result<f64> {
    let w = &unit.w;
    let d = unit.d as f64;
    let first = (1.0 - d) * (unit.m - (1.0 - gamma));
    let ind = if unit.d == 1 { indicator(unit.score.ok_or(Error::MissingScore(unit.id))?, r) } else { 0.0 };
    Ok(match surrogate_cdf(unit, setting)? {
        None => first + d * w.pi_d * (ind - unit.m),
        Some(mt) => first + (1.0 - w.e_d) * (mt - unit.m) + d * w.pi_d * (ind - mt),
    })
}

/// Dispatches to [`psi_counterfactual`] or [`psi_target`].
pub fn psi(r: f64, unit: &EifUnit, target: Target, setting: Setting, level: f64) -> Result<f64> {
    match target {
        Target::Arm0 => psi_counterfactual(r, unit, 0, setting, level),
        Target::Arm1 => psi_counterfactual(r, unit, 1, setting, level),
        Target::Nested => psi_target(r, unit, setting, level),
    }
}
