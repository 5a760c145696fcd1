use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileSolution {
    pub r_hat: f64,
    /// False when even `r = +∞` leaves the moment sum negative.
    pub attained: bool,
}

/// Sorted unique finite scores followed by a `+∞` sentinel.
pub fn candidate_grid(scores: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut grid: Vec<f64> = scores.into_iter().filter(|s| s.is_finite()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid.push(f64::INFINITY);
    grid
}

/// Smallest candidate `r` with `Σ_i ψ(r, unit_i) >= 0`.
///
/// `candidates` must be sorted; a trailing `+∞` is appended when missing.
/// The moment sum must be non-decreasing along the grid, which holds when
/// the localized CDF predictions do not depend on `r`.
pub fn solve_quantile<U, F>(units: &[U], psi_eval: F, candidates: &[f64]) -> Result<QuantileSolution>
where
    F: Fn(f64, &U) -> Result<f64>,
{
    let finite = candidates.iter().filter(|c| c.is_finite()).count();
    if finite == 0 {
        return Err(Error::NoScoredUnits);
    }
    if candidates.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("candidate grid must be sorted".into()));
    }
    let mut grid = candidates.to_vec();
    if grid.last() != Some(&f64::INFINITY) {
        grid.push(f64::INFINITY);
    }
    let mut prev = f64::NEG_INFINITY;
    for &r in &grid {
        let mut total = 0.0;
        for u in units {
            total += psi_eval(r, u)?;
        }
        if total < prev - 1e-9 * (1.0 + prev.abs()) {
            return Err(Error::CalibrationFailure(format!("moment sum decreased from {prev} to {total} at r = {r}")));
        }
        prev = total;
        if total >= 0.0 {
            return Ok(QuantileSolution { r_hat: r, attained: true });
        }
    }
    Ok(QuantileSolution { r_hat: f64::INFINITY, attained: false })
}

/// Batch weighted split-conformal quantile.
///
/// Scores get mass `w_i / (Σw + max w)` and the remaining `max w / (Σw + max w)`
/// sits at `+∞`; returns the smallest `r` whose cumulative mass reaches `1 - α`.
pub fn weighted_cqr_quantile(scores: &[f64], weights: &[f64], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    if scores.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), got: weights.len() });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0,1)")));
    }
    if let Some(i) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::NonPositiveWeight(i));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("conformal scores".into()));
    }
    let max_w = weights.iter().cloned().fold(0.0, f64::max);
    let total: f64 = weights.iter().sum::<f64>() + max_w;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let need = (1.0 - alpha) * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    for (pos, &i) in order.iter().enumerate() {
        cum += weights[i];
        // ties enter together
        let last_of_tie = order.get(pos + 1).is_none_or(|&j| scores[j] != scores[i]);
        if last_of_tie && cum >= need {
            return Ok(scores[i]);
        }
    }
    Ok(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Setting;
    use crate::eif::{psi_counterfactual, EifUnit, EifWeights};
    use proptest::prelude::*;

    fn unit(id: usize, a: u8, d: u8, score: Option<f64>, w: EifWeights, m: f64) -> EifUnit {
        EifUnit { id, a, d, score, w, m, m_tilde: None }
    }

    /// Reference: evaluate every candidate independently and keep the
    /// smallest with a non-negative sum.
    fn brute_force(units: &[EifUnit], alpha: f64, grid: &[f64]) -> f64 {
        grid.iter()
            .copied()
            .filter(|&r| {
                units.iter().map(|u| psi_counterfactual(r, u, 1, Setting::S1, alpha).unwrap()).sum::<f64>() >= 0.0
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn unit_weight_example() {
        let w = EifWeights::new(0.5, 0.5, 0.5, 0.5);
        let mut units: Vec<EifUnit> = (1..=5).map(|i| unit(i, 1, 1, Some(i as f64), w, 0.0)).collect();
        units.push(unit(0, 0, 1, None, w, 0.0));
        let alpha = 0.2;
        let grid = candidate_grid((1..=5).map(|i| i as f64));
        let sol = solve_quantile(&units, |r, u| psi_counterfactual(r, u, 1, Setting::S1, alpha), &grid).unwrap();
        // Σψ(r) = #{R_i <= r} - 0.8, so the first score already crosses
        assert_eq!(sol.r_hat, 1.0);
        assert_eq!(sol.r_hat, brute_force(&units, alpha, &grid));
    }

    #[test]
    fn single_scored_unit() {
        let w = EifWeights::new(0.5, 0.5, 0.5, 0.5);
        let units = [unit(0, 1, 1, Some(2.5), w, 0.0), unit(1, 0, 1, None, w, 0.0)];
        let grid = candidate_grid([2.5]);
        let sol = solve_quantile(&units, |r, u| psi_counterfactual(r, u, 1, Setting::S1, 0.5), &grid).unwrap();
        assert_eq!(sol, QuantileSolution { r_hat: 2.5, attained: true });
    }

    #[test]
    fn unattainable_returns_infinity() {
        let w = EifWeights::new(0.5, 0.5, 0.5, 0.5);
        let mut units = vec![unit(0, 1, 1, Some(1.0), w, 0.9)];
        units.extend((1..10).map(|i| unit(i, 0, 1, None, w, 0.0)));
        let grid = candidate_grid([1.0]);
        let sol = solve_quantile(&units, |r, u| psi_counterfactual(r, u, 1, Setting::S1, 0.1), &grid).unwrap();
        assert_eq!(sol, QuantileSolution { r_hat: f64::INFINITY, attained: false });
        assert_eq!(
            solve_quantile(&units, |r, u| psi_counterfactual(r, u, 1, Setting::S1, 0.1), &[]),
            Err(Error::NoScoredUnits)
        );
    }

    #[test]
    fn weighted_examples() {
        let scores: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        assert_eq!(weighted_cqr_quantile(&scores, &[1.0; 10], 0.1).unwrap(), 10.0);
        // one atom of mass 1/2 at the score and 1/2 at +∞
        assert_eq!(weighted_cqr_quantile(&[3.0], &[2.0], 0.5).unwrap(), 3.0);
        assert_eq!(weighted_cqr_quantile(&[3.0], &[2.0], 0.4).unwrap(), f64::INFINITY);
        assert_eq!(weighted_cqr_quantile(&[4.0, -1.0, 2.0], &[0.3, 2.0, 1.0], 1.0 - 1e-9).unwrap(), -1.0);
        assert_eq!(weighted_cqr_quantile(&[], &[], 0.1), Err(Error::EmptyInput));
        assert_eq!(weighted_cqr_quantile(&[1.0, 2.0], &[1.0, 0.0], 0.1), Err(Error::NonPositiveWeight(1)));
    }

    #[test]
    fn uniform_weights_match_order_statistic() {
        for n in 1..=12usize {
            for step in 1..40 {
                let alpha = step as f64 / 40.0;
                let scores: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 + i as f64 * 0.01).collect();
                let mut sorted = scores.clone();
                sorted.sort_by(f64::total_cmp);
                let k = ((1.0 - alpha) * (n as f64 + 1.0) - 1e-9).ceil() as usize;
                let expected = if k > n { f64::INFINITY } else { sorted[k.max(1) - 1] };
                assert_eq!(
                    weighted_cqr_quantile(&scores, &vec![1.0; n], alpha).unwrap(),
                    expected,
                    "n={n} alpha={alpha}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn solver_matches_exhaustive_search(
            raw in proptest::collection::vec((0u8..2, 0u8..2, -2.0f64..2.0, 0.05f64..0.95, 0.05f64..0.95, 0.0f64..1.0), 2..12),
            alpha in 0.02f64..0.6,
        ) {
            let units: Vec<EifUnit> = raw
                .iter()
                .enumerate()
                .map(|(i, &(a, d, s, ea, ed, m))| {
                    let score = (a == 1 && d == 1).then_some(s);
                    unit(i, a, d, score, EifWeights::new(ea, ed, 1.0 - ed, 0.5), m)
                })
                .collect();
            let grid = candidate_grid(units.iter().filter_map(|u| u.score));
            prop_assume!(grid.len() > 1);
            let sol = solve_quantile(&units, |r, u| psi_counterfactual(r, u, 1, Setting::S1, alpha), &grid).unwrap();
            prop_assert_eq!(sol.r_hat, brute_force(&units, alpha, &grid));
        }
    }
}
