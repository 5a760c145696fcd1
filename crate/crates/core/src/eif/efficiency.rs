use rayon::prelude::*;

use crate::data::Setting;
use crate::error::Result;
use crate::rng::{replicate_rng, SimRng};

use super::{psi, EifUnit, Target};

/// A data-generating process with known nuisance functions.
pub trait GainOracle: Sync {
    /// Miscoverage level (`α` for the arms, `γ` for the nested target).
    fn level(&self, target: Target) -> f64;

    /// Population quantile at which the influence functions are centred.
    fn true_quantile(&self, target: Target) -> Result<f64>;

    /// One unit carrying its score and the oracle `m`, `m̃` at the true quantile.
    fn draw_unit(&self, target: Target, rng: &mut SimRng) -> Result<EifUnit>;

    /// Integrand of the closed-form efficiency gain at a fresh covariate draw.
    fn gain_integrand(&self, target: Target, rng: &mut SimRng) -> Result<f64>;
}

/// Type alias kept for callers that think in terms of units rather than oracles.
pub type OracleUnit = EifUnit;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainEstimate {
    /// Mean over replicates of `var ψ^(S1) - var ψ^(S2)`.
    pub mc_gain: f64,
    pub mc_se: f64,
    pub closed_form: f64,
    pub closed_form_se: f64,
    pub mean_psi_s1: f64,
    pub mean_psi_s1_se: f64,
    pub mean_psi_s2: f64,
    pub mean_psi_s2_se: f64,
}

impl GainEstimate {
    pub fn combined_se(&self) -> f64 {
        self.mc_se.hypot(self.closed_form_se)
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of the variance reduction from surrogates at the
/// true quantile, next to the closed-form expression for the same quantity.
pub fn variance_gain_mc<O: GainOracle>(
    oracle: &O,
    target: Target,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<GainEstimate> {
    let r = oracle.true_quantile(target)?;
    let level = oracle.level(target);
    struct Rep {
        gain: f64,
        closed: f64,
        psi1: Vec<f64>,
        psi2: Vec<f64>,
    }
    let reps: Vec<Rep> = (0..reps as u64)
        .into_par_iter()
        .map(|i| -> Result<Rep> {
            let mut rng = replicate_rng(seed, i);
            let mut psi1 = Vec::with_capacity(n);
            let mut psi2 = Vec::with_capacity(n);
            for _ in 0..n {
                let u = oracle.draw_unit(target, &mut rng)?;
                psi1.push(psi(r, &u, target, Setting::S1, level)?);
                psi2.push(psi(r, &u, target, Setting::S2, level)?);
            }
            let var = |v: &[f64]| mean_se(v).1.powi(2) * v.len() as f64;
            let mut closed = 0.0;
            for _ in 0..n {
                closed += oracle.gain_integrand(target, &mut rng)?;
            }
            Ok(Rep { gain: var(&psi1) - var(&psi2), closed: closed / n as f64, psi1, psi2 })
        })
        .collect::<Result<_>>()?;
    let (mc_gain, mc_se) = mean_se(&reps.iter().map(|r| r.gain).collect::<Vec<_>>());
    let (closed_form, closed_form_se) = mean_se(&reps.iter().map(|r| r.closed).collect::<Vec<_>>());
    let all1: Vec<f64> = reps.iter().flat_map(|r| r.psi1.iter().copied()).collect();
    let all2: Vec<f64> = reps.iter().flat_map(|r| r.psi2.iter().copied()).collect();
    let (mean_psi_s1, mean_psi_s1_se) = mean_se(&all1);
    let (mean_psi_s2, mean_psi_s2_se) = mean_se(&all2);
    Ok(GainEstimate {
        mc_gain,
        mc_se,
        closed_form,
        closed_form_se,
        mean_psi_s1,
        mean_psi_s1_se,
        mean_psi_s2,
        mean_psi_s2_se,
    })
}
