//! Simulation designs with known potential outcomes.
//!
//! Three processes share the covariate, treatment and surrogate layers:
//! `Continuous` (Gaussian outcomes), `Grouped` (adds a three-level group that
//! shifts treatment odds and outcomes) and `Categorical` (five-level outcomes
//! driven by covariates and surrogates, with the same group layer).

mod calibrate;
mod oracle;

pub use calibrate::{intercepts, Intercepts, PILOT_DRAWS};
pub use oracle::ContinuousOracle;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{validate_dataset, Dataset, Observation, OutcomeKind, Setting};
use crate::error::{Error, Result};
use crate::rng::{seeded, SimRng};

pub const GROUP_TARGETS: [f64; 3] = [0.5, 0.3, 0.2];
pub const Y1_TARGETS: [f64; 5] = [0.1, 0.2, 0.4, 0.15, 0.15];
pub const Y0_TARGETS: [f64; 5] = [0.3, 0.3, 0.2, 0.15, 0.05];
/// Coefficient on each covariate in the treatment logit.
pub const ETA: f64 = -0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DgpKind {
    Continuous,
    Grouped,
    Categorical,
}

impl std::fmt::Display for DgpKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DgpKind::Continuous => "continuous",
            DgpKind::Grouped => "grouped",
            DgpKind::Categorical => "categorical",
        })
    }
}

impl std::str::FromStr for DgpKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "continuous" => Ok(DgpKind::Continuous),
            "grouped" => Ok(DgpKind::Grouped),
            "categorical" => Ok(DgpKind::Categorical),
            other => Err(Error::InvalidParameter(format!("unknown dgp {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub sigma_s: f64,
    pub kind: DgpKind,
    pub seed: u64,
    /// Which surrogate columns the operational dataset keeps.
    pub setting: Setting,
    /// When false, outcomes ignore the surrogates.
    pub surrogate_effect: bool,
    /// Replaces `P(D=1) = n^{-1/4}` with an arm-specific `P(D=1 | A=a)`.
    pub source_prob: Option<[f64; 2]>,
}

impl DgpConfig {
    pub fn new(kind: DgpKind, n: usize, sigma_s: f64, seed: u64) -> Self {
        DgpConfig { n, sigma_s, kind, seed, setting: Setting::S2, surrogate_effect: true, source_prob: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 100 {
            return Err(Error::InvalidParameter(format!("n = {} below 100", self.n)));
        }
        if !(self.sigma_s > 0.0 && self.sigma_s.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma_s = {} must be positive", self.sigma_s)));
        }
        if let Some(p) = self.source_prob {
            if p.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
                return Err(Error::InvalidParameter("source probabilities must lie in (0,1]".into()));
            }
        }
        Ok(())
    }

    /// `P(D=1 | A=a)`.
    pub fn source_probability(&self, a: u8) -> f64 {
        match self.source_prob {
            Some(p) => p[a as usize],
            None => (self.n as f64).powf(-0.25),
        }
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        match self.kind {
            DgpKind::Categorical => OutcomeKind::Categorical,
            _ => OutcomeKind::Continuous,
        }
    }
}

/// Full potential-outcome record, kept apart from the operational data.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimTruth {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub s0: Vec<[f64; 2]>,
    pub s1: Vec<[f64; 2]>,
    /// `Y(1) - Y(0)`; only meaningful for continuous outcomes.
    pub theta: Vec<f64>,
    pub e_a: Vec<f64>,
    /// `P(G=g | X)` per unit for grouped designs.
    pub group_probs: Option<Vec<[f64; 3]>>,
    /// `P(Y(a)=k | X, S(a))` indexed `[unit][a][k-1]` for categorical designs.
    pub class_probs: Option<Vec<[[f64; 5]; 2]>>,
}

impl SimTruth {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn outcome(&self, i: usize, a: u8) -> f64 {
        if a == 1 {
            self.y1[i]
        } else {
            self.y0[i]
        }
    }
}

pub(crate) fn expit(v: f64) -> f64 {
    crate::learners::sigmoid(v)
}

/// Linear parts of the group log-weights (before the `-α_G` shift and sign).
pub(crate) fn group_linear(x: &[f64; 2]) -> [f64; 3] {
    [(x[0] + x[1]) / 2.0, x[0] + x[1] / 2.0, x[0] / 2.0 + x[1]]
}

pub fn group_probabilities(alpha_g: &[f64; 3], x: &[f64; 2]) -> [f64; 3] {
    calibrate::group_distribution(alpha_g, x)
}

/// One draw of every layer for a single unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitDraw {
    pub x: [f64; 2],
    pub group: Option<u32>,
    pub e_a: f64,
    pub a: u8,
    pub d: u8,
    pub s: [[f64; 2]; 2],
    pub y: [f64; 2],
    pub group_probs: Option<[f64; 3]>,
    pub class_probs: Option<[[f64; 5]; 2]>,
}

/// Surrogate loading in the continuous outcome model, `(-1)^a / 10`.
pub fn surrogate_coef(a: u8, surrogate_effect: bool) -> f64 {
    if !surrogate_effect {
        0.0
    } else if a == 1 {
        -0.1
    } else {
        0.1
    }
}

fn categorical_probs(alpha_y: &[f64; 5], x: &[f64; 2], s: &[f64; 2], surrogate_effect: bool) -> [f64; 5] {
    let s_coef = if surrogate_effect { 0.5 } else { 0.0 };
    let eta = -(x[0] + x[1]) / 2.0 - s_coef * (s[0] + s[1]);
    let mut logits = [0.0; 5];
    for k in 1..5 {
        logits[k] = -alpha_y[k] + eta;
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p = logits.map(|l| (l - max).exp());
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

fn sample_label(p: &[f64; 5], rng: &mut SimRng) -> f64 {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (k, pk) in p.iter().enumerate() {
        cum += pk;
        if u < cum {
            return (k + 1) as f64;
        }
    }
    5.0
}

/// Draws one unit. Exposed so oracles and tests can share the generator.
pub fn draw_unit(cfg: &DgpConfig, ic: &Intercepts, rng: &mut SimRng) -> UnitDraw {
    let mut z = || -> f64 { StandardNormal.sample(rng) };
    let x = [z(), z()];
    let sig = cfg.sigma_s;
    let s = [[-1.0 + sig * z(), -1.0 + sig * z()], [1.0 + sig * z(), 1.0 + sig * z()]];
    let eps = [z(), z()];
    let grouped = cfg.kind != DgpKind::Continuous;
    let (group, group_probs) = if grouped {
        let p = group_probabilities(&ic.alpha_g, &x);
        let u: f64 = rng.random();
        let g = if u < p[0] {
            1
        } else if u < p[0] + p[1] {
            2
        } else {
            3
        };
        (Some(g), Some(p))
    } else {
        (None, None)
    };
    let g_shift = group.map_or(0.0, |g| g as f64);
    let e_a = expit(ic.alpha_a + ETA * (x[0] + x[1]) - g_shift);
    let a = u8::from(rng.random::<f64>() < e_a);
    let d = u8::from(rng.random::<f64>() < cfg.source_probability(a));

    let (y, class_probs) = match cfg.kind {
        DgpKind::Categorical => {
            let p0 = categorical_probs(&ic.alpha_y[0], &x, &s[0], cfg.surrogate_effect);
            let p1 = categorical_probs(&ic.alpha_y[1], &x, &s[1], cfg.surrogate_effect);
            ([sample_label(&p0, rng), sample_label(&p1, rng)], Some([p0, p1]))
        }
        _ => {
            let y = |arm: u8| -> f64 {
                let base = if arm == 1 { 1.0 } else { -1.0 };
                let sa = s[arm as usize];
                base + surrogate_coef(arm, cfg.surrogate_effect) * (sa[0] + sa[1])
                    + x[0]
                    + x[1]
                    + g_shift
                    + eps[arm as usize]
            };
            ([y(0), y(1)], None)
        }
    };
    UnitDraw { x, group, e_a, a, d, s, y, group_probs, class_probs }
}

/// Simulates a dataset and its ground truth. The operational copy drops the
/// outcome on target units and surrogates according to `cfg.setting`.
pub fn generate(cfg: &DgpConfig) -> Result<(Dataset, SimTruth)> {
    cfg.validate()?;
    let ic = intercepts(cfg.kind, cfg.sigma_s, cfg.surrogate_effect)?;
    let mut rng = seeded(cfg.seed);
    let mut obs = Vec::with_capacity(cfg.n);
    let mut truth = SimTruth::default();
    let mut gp = Vec::new();
    let mut cp = Vec::new();
    for _ in 0..cfg.n {
        let u = draw_unit(cfg, &ic, &mut rng);
        let s_obs = u.s[u.a as usize].to_vec();
        let keep_s = match cfg.setting {
            Setting::S1 => false,
            Setting::S2 => true,
            Setting::S3 => u.d == 1,
        };
        obs.push(Observation {
            x: u.x.to_vec(),
            a: u.a,
            s: keep_s.then_some(s_obs),
            y: (u.d == 1).then_some(u.y[u.a as usize]),
            d: u.d,
            group: u.group,
        });
        truth.y0.push(u.y[0]);
        truth.y1.push(u.y[1]);
        truth.s0.push(u.s[0]);
        truth.s1.push(u.s[1]);
        truth.theta.push(u.y[1] - u.y[0]);
        truth.e_a.push(u.e_a);
        if let Some(p) = u.group_probs {
            gp.push(p);
        }
        if let Some(p) = u.class_probs {
            cp.push(p);
        }
    }
    if !gp.is_empty() {
        truth.group_probs = Some(gp);
    }
    if !cp.is_empty() {
        truth.class_probs = Some(cp);
    }
    let ds = validate_dataset(obs, cfg.setting, cfg.outcome_kind())?;
    Ok((ds, truth))
}

pub fn gen_continuous(n: usize, sigma_s: f64, seed: u64) -> Result<(Dataset, SimTruth)> {
    generate(&DgpConfig::new(DgpKind::Continuous, n, sigma_s, seed))
}

pub fn gen_grouped(n: usize, sigma_s: f64, seed: u64) -> Result<(Dataset, SimTruth)> {
    generate(&DgpConfig::new(DgpKind::Grouped, n, sigma_s, seed))
}

pub fn gen_categorical(n: usize, sigma_s: f64, seed: u64) -> Result<(Dataset, SimTruth)> {
    generate(&DgpConfig::new(DgpKind::Categorical, n, sigma_s, seed))
}
