use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::eif::{EifUnit, EifWeights, GainOracle, Target};
use crate::error::{Error, Result};
use crate::rng::SimRng;

use super::{draw_unit, expit, intercepts, surrogate_coef, DgpConfig, DgpKind, Intercepts, ETA};

/// Closed-form nuisances of the continuous design for the oracle score
/// `R_a = |Y(a) - E[Y(a) | X]|`.
///
/// Given `X` and `S(a)`, `Y(a) - E[Y(a)|X] = c + ε` with
/// `c = κ_a (ΣS(a) - 2μ_a)`, so every conditional CDF of the score is a
/// folded-normal probability.
#[derive(Debug, Clone)]
pub struct ContinuousOracle {
    cfg: DgpConfig,
    ic: Intercepts,
    alpha: f64,
    gamma: f64,
    /// `var_m_tilde(a, r)` at the quantiles the gain integrand evaluates.
    var_cache: Vec<(u8, f64, f64)>,
}

fn phi(v: f64) -> f64 {
    Normal::standard().cdf(v)
}

impl ContinuousOracle {
    pub fn new(cfg: DgpConfig, alpha: f64, gamma: f64) -> Result<Self> {
        if cfg.kind != DgpKind::Continuous {
            return Err(Error::OracleUnavailable(format!("no closed-form oracle for {} design", cfg.kind)));
        }
        cfg.validate()?;
        let ic = intercepts(cfg.kind, cfg.sigma_s, cfg.surrogate_effect)?;
        let mut o = ContinuousOracle { cfg, ic, alpha, gamma, var_cache: Vec::new() };
        let mut cache = Vec::new();
        for a in 0..2u8 {
            for level in [alpha, gamma] {
                for r in [o.arm_quantile(a, level), o.arm_quantile(1, level)] {
                    cache.push((a, r, o.var_m_tilde(a, r)));
                }
            }
        }
        o.var_cache = cache;
        Ok(o)
    }

    pub fn config(&self) -> &DgpConfig {
        &self.cfg
    }

    pub fn e_a(&self, x: &[f64]) -> f64 {
        expit(self.ic.alpha_a + ETA * (x[0] + x[1]))
    }

    pub fn e_d(&self, a: u8) -> f64 {
        self.cfg.source_probability(a)
    }

    fn surrogate_mean(a: u8) -> f64 {
        if a == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// `E[Y(a) | X = x]`.
    pub fn mu(&self, a: u8, x: &[f64]) -> f64 {
        let base = if a == 1 { 1.0 } else { -1.0 };
        base + surrogate_coef(a, self.cfg.surrogate_effect) * 2.0 * Self::surrogate_mean(a) + x[0] + x[1]
    }

    /// Standard deviation of `Y(a) - E[Y(a)|X]`.
    pub fn residual_sd(&self, a: u8) -> f64 {
        let k = surrogate_coef(a, self.cfg.surrogate_effect);
        (1.0 + 2.0 * k * k * self.cfg.sigma_s * self.cfg.sigma_s).sqrt()
    }

    /// `P(R_a <= r | X)`, identical for every `x`.
    pub fn m(&self, a: u8, r: f64) -> f64 {
        if r < 0.0 {
            return 0.0;
        }
        let sd = self.residual_sd(a);
        2.0 * phi(r / sd) - 1.0
    }

    fn shift(&self, a: u8, s: &[f64]) -> f64 {
        surrogate_coef(a, self.cfg.surrogate_effect) * (s[0] + s[1] - 2.0 * Self::surrogate_mean(a))
    }

    /// `P(R_a <= r | X = x, S(a) = s)`.
    pub fn m_tilde(&self, a: u8, r: f64, _x: &[f64], s: &[f64]) -> f64 {
        if r < 0.0 {
            return 0.0;
        }
        let c = self.shift(a, s);
        phi(r - c) - phi(-r - c)
    }

    /// The same conditional CDF by brute-force simulation of the outcome
    /// noise at fixed `(x, s)`.
    pub fn m_tilde_simulated(&self, a: u8, r: f64, x: &[f64], s: &[f64], draws: usize, rng: &mut SimRng) -> f64 {
        let base = if a == 1 { 1.0 } else { -1.0 };
        let k = surrogate_coef(a, self.cfg.surrogate_effect);
        let mu = self.mu(a, x);
        let mut hits = 0usize;
        for _ in 0..draws {
            let eps: f64 = StandardNormal.sample(rng);
            let y = base + k * (s[0] + s[1]) + x[0] + x[1] + eps;
            if (y - mu).abs() <= r {
                hits += 1;
            }
        }
        hits as f64 / draws as f64
    }

    /// `var{ m̃_a(r, X, S) | X }` by quadrature over `ΣS(a) ~ N(2μ_a, 2σ²)`.
    pub fn var_m_tilde(&self, a: u8, r: f64) -> f64 {
        let k = surrogate_coef(a, self.cfg.surrogate_effect);
        let tau = (2.0f64).sqrt() * self.cfg.sigma_s * k.abs();
        if tau == 0.0 || r < 0.0 {
            return 0.0;
        }
        let nodes = 4001;
        let span = 10.0;
        let h = 2.0 * span / (nodes - 1) as f64;
        let (mut m1, mut m2, mut mass) = (0.0, 0.0, 0.0);
        for i in 0..nodes {
            let z = -span + i as f64 * h;
            let w = (-0.5 * z * z).exp();
            let c = tau * z;
            let v = phi(r - c) - phi(-r - c);
            m1 += w * v;
            m2 += w * v * v;
            mass += w;
        }
        let (m1, m2) = (m1 / mass, m2 / mass);
        (m2 - m1 * m1).max(0.0)
    }

    fn cached_var(&self, a: u8, r: f64) -> f64 {
        self.var_cache.iter().find(|c| c.0 == a && c.1 == r).map_or_else(|| self.var_m_tilde(a, r), |c| c.2)
    }

    fn arm_quantile(&self, a: u8, level: f64) -> f64 {
        self.residual_sd(a) * Normal::standard().inverse_cdf(1.0 - level / 2.0)
    }

    fn weights(&self, e_a: f64, a: u8) -> EifWeights {
        EifWeights::exact(e_a, self.e_d(0), self.e_d(1), self.e_d(a))
    }
}

impl GainOracle for ContinuousOracle {
    fn level(&self, target: Target) -> f64 {
        match target {
            Target::Nested => self.gamma,
            _ => self.alpha,
        }
    }

    fn true_quantile(&self, target: Target) -> Result<f64> {
        // the score law is free of X and both arms share it, so the quantile
        // is the same on every subpopulation
        Ok(match target {
            Target::Arm0 => self.arm_quantile(0, self.alpha),
            Target::Arm1 => self.arm_quantile(1, self.alpha),
            Target::Nested => {
                if self.residual_sd(0) != self.residual_sd(1) {
                    return Err(Error::OracleUnavailable("arms have different residual scales".into()));
                }
                self.arm_quantile(1, self.gamma)
            }
        })
    }

    fn draw_unit(&self, target: Target, rng: &mut SimRng) -> Result<EifUnit> {
        let r = self.true_quantile(target)?;
        let u = draw_unit(&self.cfg, &self.ic, rng);
        let arm = match target {
            Target::Arm0 => 0,
            Target::Arm1 => 1,
            Target::Nested => u.a,
        };
        let observed_arm = u.a == arm;
        let score = (observed_arm && u.d == 1).then(|| (u.y[arm as usize] - self.mu(arm, &u.x)).abs());
        let m = self.m(arm, r);
        let m_tilde = if observed_arm { self.m_tilde(arm, r, &u.x, &u.s[arm as usize]) } else { m };
        Ok(EifUnit { id: 0, a: u.a, d: u.d, score, w: self.weights(u.e_a, u.a), m, m_tilde: Some(m_tilde) })
    }

    fn gain_integrand(&self, target: Target, rng: &mut SimRng) -> Result<f64> {
        let r = self.true_quantile(target)?;
        let x: [f64; 2] = [StandardNormal.sample(rng), StandardNormal.sample(rng)];
        let e_a = self.e_a(&x);
        let (ed0, ed1) = (self.e_d(0), self.e_d(1));
        Ok(match target {
            Target::Arm1 => (1.0 - ed1) / ed1 * ed0 * ed0 * (1.0 - e_a).powi(2) / e_a * self.cached_var(1, r),
            Target::Arm0 => (1.0 - ed0) / ed0 * ed1 * ed1 * e_a * e_a / (1.0 - e_a) * self.cached_var(0, r),
            Target::Nested => {
                let a = u8::from(rng.random::<f64>() < e_a);
                let ed = self.e_d(a);
                (1.0 - ed) / ed * (1.0 - ed).powi(2) * self.cached_var(a, r)
            }
        })
    }
}
