use crate::data::Setting;
use crate::error::{Error, Result};

use super::{psi_counterfactual, EifUnit, EifWeights};

/// Joint law of one arm's `(S(a), R(a))` given a covariate atom, as a list
/// of `(probability, surrogate label, score)` triples.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmOutcomes {
    pub atoms: Vec<(f64, u32, f64)>,
}

/// Finite full-data distribution. Outcomes are independent of `(A, D)`
/// given `X`, so the observed-data law follows by coarsening.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    pub px: Vec<f64>,
    /// `P(A=1 | x)`.
    pub e_a: Vec<f64>,
    /// `P(D=1 | x, A=a)` indexed by `a`.
    pub e_d: Vec<[f64; 2]>,
    /// Potential outcome laws indexed by arm.
    pub outcomes: Vec<[ArmOutcomes; 2]>,
}

/// Deliberate misspecification of the outcome-side nuisances. With exact
/// propensities the identity must survive any of these.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NuisanceOverride {
    pub m_offset: f64,
    pub m_tilde_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaCheck {
    /// `P(R_a <= r | A=1-a, D=1)` from the full-data law.
    pub lhs: f64,
    /// `1 - α + E ψ_a(r) / P(A=1-a, D=1)` from the observed-data law.
    pub rhs: f64,
}

impl DiscreteDist {
    fn validate(&self) -> Result<()> {
        let k = self.px.len();
        if self.e_a.len() != k || self.e_d.len() != k || self.outcomes.len() != k {
            return Err(Error::MixedDimensions("discrete distribution tables".into()));
        }
        let total: f64 = self.px.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("P(X) sums to {total}")));
        }
        for arms in &self.outcomes {
            for arm in arms {
                let t: f64 = arm.atoms.iter().map(|a| a.0).sum();
                if (t - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!("outcome law sums to {t}")));
                }
            }
        }
        Ok(())
    }

    fn p_arm(&self, x: usize, a: u8) -> f64 {
        if a == 1 {
            self.e_a[x]
        } else {
            1.0 - self.e_a[x]
        }
    }
}

/// Evaluates both sides of the coverage-deviation identity for arm `a` by
/// exact enumeration.
pub fn lemma_dr_check(
    dist: &DiscreteDist,
    r: f64,
    arm: u8,
    setting: Setting,
    alpha: f64,
    overrides: NuisanceOverride,
) -> Result<LemmaCheck> {
    dist.validate()?;
    let other = 1 - arm;

    // full-data route
    let mut num = 0.0;
    let mut den = 0.0;
    for x in 0..dist.px.len() {
        let w = dist.px[x] * dist.p_arm(x, other) * dist.e_d[x][other as usize];
        let cdf: f64 = dist.outcomes[x][arm as usize].atoms.iter().filter(|t| t.2 <= r).map(|t| t.0).sum();
        num += w * cdf;
        den += w;
    }
    let lhs = num / den;

    // observed-data route: enumerate coarsened atoms and plug in nuisances
    // computed from the observed conditional laws
    let mut expected_psi = 0.0;
    let mut p_other_source = 0.0;
    for x in 0..dist.px.len() {
        // P(R <= r | x, [s,] A=arm, D=1) from the observed source atoms of the arm
        let obs_source_arm = |s: Option<u32>| -> f64 {
            let base = dist.px[x] * dist.p_arm(x, arm) * dist.e_d[x][arm as usize];
            let (mut hit, mut mass) = (0.0, 0.0);
            for &(p, sl, sc) in &dist.outcomes[x][arm as usize].atoms {
                if s.is_some_and(|s| s != sl) {
                    continue;
                }
                mass += base * p;
                if sc <= r {
                    hit += base * p;
                }
            }
            hit / mass
        };
        let m = obs_source_arm(None) + overrides.m_offset;
        let w = EifWeights::exact(dist.e_a[x], dist.e_d[x][0], dist.e_d[x][1], 0.5);
        for a in [0u8, 1] {
            for d in [0u8, 1] {
                let pd = if d == 1 { dist.e_d[x][a as usize] } else { 1.0 - dist.e_d[x][a as usize] };
                let base = dist.px[x] * dist.p_arm(x, a) * pd;
                if a == other && d == 1 {
                    p_other_source += base;
                }
                for &(p, sl, sc) in &dist.outcomes[x][a as usize].atoms {
                    let m_tilde = if a == arm { obs_source_arm(Some(sl)) + overrides.m_tilde_offset } else { m };
                    let unit = EifUnit { id: x, a, d, score: (d == 1).then_some(sc), w, m, m_tilde: Some(m_tilde) };
                    expected_psi += base * p * psi_counterfactual(r, &unit, arm, setting, alpha)?;
                }
            }
        }
    }
    Ok(LemmaCheck { lhs, rhs: 1.0 - alpha + expected_psi / p_other_source })
}
