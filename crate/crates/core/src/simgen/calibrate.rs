//! Intercept tuning on fixed pilot samples so that marginal rates hit their
//! targets. Results are cached per `(kind, σ_S, surrogate effect)`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::seeded;

use super::{expit, group_linear, DgpKind, GROUP_TARGETS, Y0_TARGETS, Y1_TARGETS};

pub const PILOT_DRAWS: usize = 100_000;
const PILOT_SEED: u64 = 0x5eed_c0de;
const MAX_ITER: usize = 200;

/// Tuned intercepts of a data-generating process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intercepts {
    pub alpha_a: f64,
    /// `α_G` with the first level pinned to zero.
    pub alpha_g: [f64; 3],
    /// `α_{Y(a),k}` indexed `[a][k-1]`, reference class first (always zero).
    pub alpha_y: [[f64; 5]; 2],
}

type Key = (DgpKind, u64, bool);

fn cache() -> &'static Mutex<HashMap<Key, Intercepts>> {
    static CACHE: OnceLock<Mutex<HashMap<Key, Intercepts>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

pub fn intercepts(kind: DgpKind, sigma_s: f64, surrogate_effect: bool) -> Result<Intercepts> {
    let key = (kind, sigma_s.to_bits(), surrogate_effect);
    if let Some(v) = cache().lock().expect("calibration cache poisoned").get(&key) {
        return Ok(*v);
    }
    let v = compute(kind, sigma_s, surrogate_effect)?;
    cache().lock().expect("calibration cache poisoned").insert(key, v);
    Ok(v)
}

struct Pilot {
    x: Vec<[f64; 2]>,
    /// Standard-normal draws for the two surrogate components of each arm.
    z: Vec<[[f64; 2]; 2]>,
}

fn pilot() -> &'static Pilot {
    static PILOT: OnceLock<Pilot> = OnceLock::new();
    PILOT.get_or_init(|| {
        let mut rng = seeded(PILOT_SEED);
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let mut x = Vec::with_capacity(PILOT_DRAWS);
        let mut z = Vec::with_capacity(PILOT_DRAWS);
        for _ in 0..PILOT_DRAWS {
            x.push([draw(), draw()]);
            z.push([[draw(), draw()], [draw(), draw()]]);
        }
        Pilot { x, z }
    })
}

/// Root of a decreasing function on a bracket that is widened as needed.
fn bisect(f: impl Fn(f64) -> f64, what: &str) -> Result<f64> {
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut widen = 0;
    while f(lo) < 0.0 || f(hi) > 0.0 {
        lo *= 2.0;
        hi *= 2.0;
        widen += 1;
        if widen > 40 {
            return Err(Error::CalibrationFailure(format!("{what}: no sign change")));
        }
    }
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::CalibrationFailure(format!("{what}: bisection did not converge")))
}

fn group_probs(alpha_g: &[f64; 3], x: &[f64; 2]) -> [f64; 3] {
    let lin = group_linear(x);
    let mut p = [0.0; 3];
    for g in 0..3 {
        p[g] = -alpha_g[g] - lin[g];
    }
    let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in p.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    p.map(|v| v / total)
}

pub(super) fn group_distribution(alpha_g: &[f64; 3], x: &[f64; 2]) -> [f64; 3] {
    group_probs(alpha_g, x)
}

fn compute(kind: DgpKind, sigma_s: f64, surrogate_effect: bool) -> Result<Intercepts> {
    let pilot = pilot();
    let mut out = Intercepts { alpha_a: 0.0, alpha_g: [0.0; 3], alpha_y: [[0.0; 5]; 2] };
    let grouped = kind != DgpKind::Continuous;

    if grouped {
        let mut alpha = [0.0f64; 3];
        let mut converged = false;
        for _ in 0..MAX_ITER {
            let mut freq = [0.0; 3];
            for x in &pilot.x {
                let p = group_probs(&alpha, x);
                for g in 0..3 {
                    freq[g] += p[g];
                }
            }
            freq.iter_mut().for_each(|f| *f /= PILOT_DRAWS as f64);
            if (0..3).all(|g| (freq[g] - GROUP_TARGETS[g]).abs() < 1e-6) {
                converged = true;
                break;
            }
            for g in 0..3 {
                alpha[g] += (freq[g] / GROUP_TARGETS[g]).ln();
            }
            let a0 = alpha[0];
            alpha.iter_mut().for_each(|a| *a -= a0);
        }
        if !converged {
            return Err(Error::CalibrationFailure("group intercepts".into()));
        }
        out.alpha_g = alpha;
    }

    let treat_rate = |alpha_a: f64| -> f64 {
        let mut total = 0.0;
        for x in &pilot.x {
            if grouped {
                let p = group_probs(&out.alpha_g, x);
                for g in 0..3 {
                    total += p[g] * expit(alpha_a - 0.5 * (x[0] + x[1]) - (g + 1) as f64);
                }
            } else {
                total += expit(alpha_a - 0.5 * (x[0] + x[1]));
            }
        }
        total / PILOT_DRAWS as f64
    };
    out.alpha_a = bisect(|a| 0.5 - treat_rate(a), "treatment intercept")?;
    if (treat_rate(out.alpha_a) - 0.5).abs() > 0.005 {
        return Err(Error::CalibrationFailure("treatment rate".into()));
    }

    if kind == DgpKind::Categorical {
        let s_coef = if surrogate_effect { 0.5 } else { 0.0 };
        for (a, targets) in [(0usize, Y0_TARGETS), (1, Y1_TARGETS)] {
            let mean_s = if a == 1 { 1.0 } else { -1.0 };
            // classes 2..5 share the slope against class 1, so only the
            // scale c = log Σ_k exp(-α_k) moves P(Y=1)
            let eta: Vec<f64> = pilot
                .x
                .iter()
                .zip(&pilot.z)
                .map(|(x, z)| {
                    let s = [mean_s + sigma_s * z[a][0], mean_s + sigma_s * z[a][1]];
                    -(x[0] + x[1]) / 2.0 - s_coef * (s[0] + s[1])
                })
                .collect();
            let p1 = |c: f64| eta.iter().map(|e| expit(-(e + c))).sum::<f64>() / PILOT_DRAWS as f64;
            let c = bisect(|c| p1(c) - targets[0], "outcome intercepts")?;
            let rest: f64 = targets[1..].iter().sum();
            let mut alpha = [0.0; 5];
            for k in 1..5 {
                alpha[k] = -(c + (targets[k] / rest).ln());
            }
            if (p1(c) - targets[0]).abs() > 0.01 {
                return Err(Error::CalibrationFailure("outcome marginals".into()));
            }
            out.alpha_y[a] = alpha;
        }
    }
    Ok(out)
}
