use crate::data::{Dataset, EstimandSpec, Fold, FoldAssignment, Interval, Observation, Setting, MIN_CELL};
use crate::eif::{weighted_cqr_quantile, EifWeights};
use crate::error::{Error, Result};
use crate::learners::{
    fit_logistic, fit_mean, fit_quantile, FeatureMap, LearnerConfig, MeanModel, Predictor, ProbModel, QuantilePair,
};
use crate::scores::{cqr_invert, cqr_score, interval_score};

use super::features::{stack, FeatureBuilder};

/// Rows a fitted component was trained on, with the folds it may draw from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub model: &'static str,
    pub allowed: Vec<Fold>,
    pub rows: Vec<usize>,
}

/// Fails unless every row lies in an allowed fold and none lies in `I2`.
pub fn check_rows(folds: &FoldAssignment, model: &str, allowed: &[Fold], rows: &[usize]) -> Result<()> {
    for &i in rows {
        if i >= folds.len() {
            return Err(Error::FoldLeak(format!("{model}: row {i} outside the fold assignment")));
        }
        let f = folds.fold_of(i);
        if f == Fold::I2 || !allowed.contains(&f) {
            return Err(Error::FoldLeak(format!("{model}: trained on row {i} from {f:?}")));
        }
    }
    Ok(())
}

/// Records training rows per component, rejecting any outside `allowed`.
pub(crate) struct Ledger<'a> {
    folds: &'a FoldAssignment,
    pub(crate) records: Vec<Provenance>,
}

impl<'a> Ledger<'a> {
    pub(crate) fn new(folds: &'a FoldAssignment) -> Self {
        Ledger { folds, records: Vec::new() }
    }

    pub(crate) fn record(&mut self, model: &'static str, allowed: &[Fold], rows: Vec<usize>) -> Result<Vec<usize>> {
        check_rows(self.folds, model, allowed, &rows)?;
        self.records.push(Provenance { model, allowed: allowed.to_vec(), rows: rows.clone() });
        Ok(rows)
    }
}

/// Indices of `folds` members satisfying `keep`, sorted.
pub(crate) fn select(
    ds: &Dataset,
    folds: &FoldAssignment,
    from: &[Fold],
    keep: impl Fn(&Observation) -> bool,
) -> Vec<usize> {
    let mut rows: Vec<usize> = from
        .iter()
        .flat_map(|f| match f {
            Fold::I11 => folds.i11.iter(),
            Fold::I12 => folds.i12.iter(),
            Fold::I2 => folds.i2.iter(),
        })
        .copied()
        .filter(|&i| keep(ds.get(i)))
        .collect();
    rows.sort_unstable();
    rows
}

const I1: [Fold; 2] = [Fold::I11, Fold::I12];

/// Conditional score CDF estimated once at the anchor `r̂^init`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedCdf {
    pub anchor: f64,
    /// `P(R <= anchor | X)` (target stage: given `(X, A)`).
    pub m: ProbModel,
    /// `P(R <= anchor | X, S)`; present only when surrogates are used.
    pub m_tilde: Option<ProbModel>,
}

/// Probability model for an indicator label; a constant model when every
/// label agrees.
pub(crate) fn fit_indicator(x: &crate::data::Matrix, labels: &[bool], cfg: &LearnerConfig) -> Result<ProbModel> {
    let n = labels.len();
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == n {
        let map = FeatureMap::fit(x, cfg.basis)?;
        let frac = (pos as f64 + 0.5) / (n as f64 + 1.0);
        let mut params = vec![0.0; map.dim()];
        params[0] = (frac / (1.0 - frac)).ln();
        return ProbModel::with_params(map, params);
    }
    fit_logistic(x, labels, None, cfg.cdf_ridge(n), cfg.basis)
}

/// Likelihood ratio between the counterfactual population `(A = 1-a, D = 1)`
/// and the scored population `(A = a, D = 1)`.
pub fn arm_ratio(w: &EifWeights, a: u8) -> f64 {
    if a == 1 {
        w.pi_a * w.e_d0 / w.e_d1
    } else {
        w.e_d1 / (w.pi_a * w.e_d0)
    }
}

/// Propensities and the per-arm quantile models shared by every method.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceModels {
    pub features: FeatureBuilder,
    pub spec: EstimandSpec,
    /// `P(A=1 | X)`.
    pub e_a: ProbModel,
    /// `P(D=1 | X, A)`.
    pub e_d: ProbModel,
    /// Quantile pair of `u(Y(a))` given `X`, indexed by arm.
    pub quantiles: [QuantilePair; 2],
}

impl SourceModels {
    pub fn weights(&self, o: &Observation) -> EifWeights {
        let fb = &self.features;
        let e_a = self.e_a.predict_row(&fb.base(o));
        let e_d0 = self.e_d.predict_row(&fb.with_arm(o, 0));
        let e_d1 = self.e_d.predict_row(&fb.with_arm(o, 1));
        EifWeights::new(e_a, e_d0, e_d1, if o.a == 1 { e_d1 } else { e_d0 })
    }

    /// Transformed outcome `u(Y)`.
    pub fn outcome(&self, o: &Observation, id: usize) -> Result<f64> {
        let y = o.y.ok_or_else(|| Error::MissingnessViolation(format!("unit {id}: source unit without outcome")))?;
        self.spec.transform.apply(y)
    }

    /// `(q_lo, q_hi)` of arm `a` at `o`'s covariates.
    pub fn band(&self, a: u8, o: &Observation) -> (f64, f64) {
        self.quantiles[a as usize].predict_row(&self.features.base(o))
    }

    /// CQR score of a source unit's observed outcome against its own arm.
    pub fn arm_score(&self, o: &Observation, id: usize) -> Result<f64> {
        let (lo, hi) = self.band(o.a, o);
        cqr_score(lo, hi, self.outcome(o, id)?)
    }

    pub fn counterfactual(&self, a: u8, o: &Observation, r: f64) -> Option<Interval> {
        let (lo, hi) = self.band(a, o);
        cqr_invert(lo, hi, r)
    }

    /// ITE interval of a source unit: `u(Y) - C_0` when treated, `C_1 - u(Y)`
    /// otherwise. `None` when the counterfactual set is empty.
    pub fn ite_interval(&self, o: &Observation, id: usize, r: [f64; 2]) -> Result<Option<Interval>> {
        let y = self.outcome(o, id)?;
        let other = 1 - o.a;
        Ok(self
            .counterfactual(other, o, r[other as usize])
            .map(|c| if o.a == 1 { c.reflect_from(y) } else { c.shift(y) }))
    }

    /// Pseudo-outcome `C_i`; an empty counterfactual set collapses to the
    /// band midpoint, a superset of the empty set.
    pub fn pseudo_outcome(&self, o: &Observation, id: usize, r: [f64; 2]) -> Result<Interval> {
        if let Some(c) = self.ite_interval(o, id, r)? {
            return Ok(c);
        }
        let (lo, hi) = self.band(1 - o.a, o);
        let mid = 0.5 * (lo + hi);
        let y = self.outcome(o, id)?;
        let v = if o.a == 1 { y - mid } else { mid - y };
        Ok(Interval { lower: v, upper: v })
    }
}

/// Nested target-stage models: endpoint means of the pseudo-outcomes and
/// the localized CDF of their interval scores.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetStage {
    pub lower: MeanModel,
    pub upper: MeanModel,
    pub cdf: LocalizedCdf,
    /// Whether the endpoint means also condition on `S`.
    pub surrogate: bool,
}

impl TargetStage {
    fn inputs(&self, fb: &FeatureBuilder, o: &Observation, id: usize) -> Result<Vec<f64>> {
        if self.surrogate {
            fb.with_arm_surrogate(o, id)
        } else {
            Ok(fb.with_arm(o, o.a))
        }
    }

    /// `(m^L, m^R)` at `o`, reordered if the two fits cross.
    pub fn endpoints(&self, fb: &FeatureBuilder, o: &Observation, id: usize) -> Result<(f64, f64)> {
        let v = self.inputs(fb, o, id)?;
        let (l, r) = (self.lower.predict_row(&v), self.upper.predict_row(&v));
        Ok(if l <= r { (l, r) } else { (r, l) })
    }

    pub fn score(&self, fb: &FeatureBuilder, o: &Observation, id: usize, pseudo: &Interval) -> Result<f64> {
        let (l, r) = self.endpoints(fb, o, id)?;
        interval_score(l, r, pseudo)
    }

    /// `(m_C, m̃_C)` at `o`.
    pub fn cdf_at(&self, fb: &FeatureBuilder, o: &Observation, id: usize) -> Result<(f64, Option<f64>)> {
        let m = self.cdf.m.predict_row(&fb.with_arm(o, o.a));
        let mt = match &self.cdf.m_tilde {
            Some(model) => Some(model.predict_row(&fb.with_arm_surrogate(o, id)?)),
            None => None,
        };
        Ok((m, mt))
    }
}

/// Every nuisance component, fitted on the training fold `I1 = I11 ∪ I12`.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceBundle {
    pub setting: Setting,
    pub source: SourceModels,
    /// Per-arm localized CDFs of the CQR scores.
    pub arm_cdf: [LocalizedCdf; 2],
    /// Target stage on `(X, A)`.
    pub target_plain: TargetStage,
    /// Target stage on `(X, A, S)`; present only when surrogates are used.
    pub target_surrogate: Option<TargetStage>,
    pub provenance: Vec<Provenance>,
}

impl NuisanceBundle {
    pub fn uses_surrogates(&self) -> bool {
        self.setting.effective() == Setting::S2
    }

    pub fn features(&self) -> &FeatureBuilder {
        &self.source.features
    }

    pub fn spec(&self) -> &EstimandSpec {
        &self.source.spec
    }

    pub fn target_stage(&self, surrogate: bool) -> Result<&TargetStage> {
        if surrogate {
            self.target_surrogate.as_ref().ok_or_else(|| Error::IncompatibleMethodSetting {
                method: "surrogate target stage".into(),
                setting: self.setting.to_string(),
            })
        } else {
            Ok(&self.target_plain)
        }
    }

    /// Re-checks every recorded training row against `folds`.
    pub fn verify_provenance(&self, folds: &FoldAssignment) -> Result<()> {
        self.provenance.iter().try_for_each(|p| check_rows(folds, p.model, &p.allowed, &p.rows))
    }
}

fn largest_finite(scores: &[f64]) -> Result<f64> {
    scores.iter().copied().filter(|s| s.is_finite()).reduce(f64::max).ok_or(Error::NoScoredUnits)
}

/// Weighted split-conformal quantile used as a localization anchor; an
/// infinite result falls back to the largest finite score.
fn anchor(scores: &[f64], weights: &[f64], level: f64) -> Result<f64> {
    let r = weighted_cqr_quantile(scores, weights, level)?;
    if r.is_finite() {
        Ok(r)
    } else {
        largest_finite(scores)
    }
}

fn check_cells(ds: &Dataset, folds: &FoldAssignment) -> Result<()> {
    for a in 0..2u8 {
        for d in 0..2u8 {
            let size = select(ds, folds, &I1, |o| o.a == a && o.d == d).len();
            if size < MIN_CELL {
                return Err(Error::CellTooSmall { a, d, size, min: MIN_CELL });
            }
        }
        for f in I1 {
            let size = select(ds, folds, &[f], |o| o.a == a && o.d == 1).len();
            if size == 0 {
                return Err(Error::CellTooSmall { a, d: 1, size, min: 1 });
            }
        }
    }
    Ok(())
}

/// Fits every nuisance component on `I1`. Surrogate models are fitted iff
/// `setting` is effectively S2.
pub fn fit_nuisances(
    ds: &Dataset,
    folds: &FoldAssignment,
    spec: &EstimandSpec,
    setting: Setting,
    cfg: &LearnerConfig,
) -> Result<NuisanceBundle> {
    if folds.len() != ds.len() {
        return Err(Error::DimensionMismatch { expected: ds.len(), got: folds.len() });
    }
    let surrogate = setting.effective() == Setting::S2;
    if surrogate && ds.setting() != Setting::S2 {
        return Err(Error::IncompatibleMethodSetting {
            method: format!("analysis under {setting}"),
            setting: ds.setting().to_string(),
        });
    }
    check_cells(ds, folds)?;
    let fb = FeatureBuilder::new(ds);
    let mut ledger = Ledger::new(folds);

    let rows = ledger.record("e_A", &I1, select(ds, folds, &I1, |_| true))?;
    let x = stack(rows.iter().map(|&i| fb.base(ds.get(i))).collect())?;
    let labels: Vec<bool> = rows.iter().map(|&i| ds.get(i).a == 1).collect();
    let e_a = fit_logistic(&x, &labels, None, cfg.ridge(rows.len()), cfg.basis)?;

    let rows = ledger.record("e_D", &I1, select(ds, folds, &I1, |_| true))?;
    let x = stack(rows.iter().map(|&i| fb.with_arm(ds.get(i), ds.get(i).a)).collect())?;
    let labels: Vec<bool> = rows.iter().map(|&i| ds.get(i).d == 1).collect();
    let e_d = fit_logistic(&x, &labels, None, cfg.ridge(rows.len()), cfg.basis)?;

    let alpha = spec.alpha;
    let mut pairs = Vec::with_capacity(2);
    for a in 0..2u8 {
        let rows = ledger.record("quantile pair", &I1, select(ds, folds, &I1, |o| o.a == a && o.d == 1))?;
        let x = stack(rows.iter().map(|&i| fb.base(ds.get(i))).collect())?;
        let y = rows
            .iter()
            .map(|&i| {
                let o = ds.get(i);
                spec.transform.apply(o.y.ok_or(Error::MissingScore(i))?)
            })
            .collect::<Result<Vec<f64>>>()?;
        let lambda = cfg.ridge(rows.len());
        pairs.push(QuantilePair {
            lower: fit_quantile(&x, &y, alpha / 2.0, lambda, cfg.basis)?,
            upper: fit_quantile(&x, &y, 1.0 - alpha / 2.0, lambda, cfg.basis)?,
        });
    }
    let upper_pair = pairs.pop().expect("two arms");
    let lower_pair = pairs.pop().expect("two arms");
    let source =
        SourceModels { features: fb.clone(), spec: spec.clone(), e_a, e_d, quantiles: [lower_pair, upper_pair] };

    let mut arm_cdf = Vec::with_capacity(2);
    for a in 0..2u8 {
        let rows = ledger.record(
            "initial quantile",
            &[Fold::I11],
            select(ds, folds, &[Fold::I11], |o| o.a == a && o.d == 1),
        )?;
        let scores = rows.iter().map(|&i| source.arm_score(ds.get(i), i)).collect::<Result<Vec<f64>>>()?;
        let weights: Vec<f64> = rows.iter().map(|&i| arm_ratio(&source.weights(ds.get(i)), a)).collect();
        let r_init = anchor(&scores, &weights, alpha)?;

        let rows =
            ledger.record("localized cdf", &[Fold::I12], select(ds, folds, &[Fold::I12], |o| o.a == a && o.d == 1))?;
        let labels =
            rows.iter().map(|&i| Ok(source.arm_score(ds.get(i), i)? <= r_init)).collect::<Result<Vec<bool>>>()?;
        let x = stack(rows.iter().map(|&i| fb.base(ds.get(i))).collect())?;
        let m = fit_indicator(&x, &labels, cfg)?;
        let m_tilde = if surrogate {
            let xs = stack(rows.iter().map(|&i| fb.with_surrogate(ds.get(i), i)).collect::<Result<_>>()?)?;
            Some(fit_indicator(&xs, &labels, cfg)?)
        } else {
            None
        };
        arm_cdf.push(LocalizedCdf { anchor: r_init, m, m_tilde });
    }
    let arm1 = arm_cdf.pop().expect("two arms");
    let arm0 = arm_cdf.pop().expect("two arms");
    let r_init = [arm0.anchor, arm1.anchor];

    let target_plain = fit_target_stage(ds, folds, &mut ledger, &source, r_init, false, cfg)?;
    let target_surrogate =
        if surrogate { Some(fit_target_stage(ds, folds, &mut ledger, &source, r_init, true, cfg)?) } else { None };

    Ok(NuisanceBundle {
        setting,
        source,
        arm_cdf: [arm0, arm1],
        target_plain,
        target_surrogate,
        provenance: ledger.records,
    })
}

fn fit_target_stage(
    ds: &Dataset,
    folds: &FoldAssignment,
    ledger: &mut Ledger<'_>,
    source: &SourceModels,
    r_init: [f64; 2],
    surrogate: bool,
    cfg: &LearnerConfig,
) -> Result<TargetStage> {
    let fb = &source.features;
    let inputs = |i: usize| -> Result<Vec<f64>> {
        let o = ds.get(i);
        if surrogate {
            fb.with_arm_surrogate(o, i)
        } else {
            Ok(fb.with_arm(o, o.a))
        }
    };

    let rows12 = ledger.record("endpoint means", &[Fold::I12], select(ds, folds, &[Fold::I12], |o| o.d == 1))?;
    let pseudo12 =
        rows12.iter().map(|&i| source.pseudo_outcome(ds.get(i), i, r_init)).collect::<Result<Vec<Interval>>>()?;
    let v12 = stack(rows12.iter().map(|&i| inputs(i)).collect::<Result<_>>()?)?;
    let lambda = cfg.ridge(rows12.len()).max(f64::MIN_POSITIVE);
    let lower = fit_mean(&v12, &pseudo12.iter().map(|c| c.lower).collect::<Vec<_>>(), lambda, cfg.basis)?;
    let upper = fit_mean(&v12, &pseudo12.iter().map(|c| c.upper).collect::<Vec<_>>(), lambda, cfg.basis)?;
    let placeholder =
        LocalizedCdf { anchor: 0.0, m: ProbModel::zero(FeatureMap::fit(&v12, cfg.basis)?), m_tilde: None };
    let mut stage = TargetStage { lower, upper, cdf: placeholder, surrogate };

    let rows11 = ledger.record("initial quantile", &[Fold::I11], select(ds, folds, &[Fold::I11], |o| o.d == 1))?;
    let mut scores = Vec::with_capacity(rows11.len());
    let mut weights = Vec::with_capacity(rows11.len());
    for &i in &rows11 {
        let o = ds.get(i);
        let c = source.pseudo_outcome(o, i, r_init)?;
        scores.push(stage.score(fb, o, i, &c)?);
        weights.push(source.weights(o).pi_d);
    }
    let r_init_c = anchor(&scores, &weights, source.spec.gamma)?;

    let rows12 = ledger.record("localized cdf", &[Fold::I12], rows12)?;
    let labels = rows12
        .iter()
        .zip(&pseudo12)
        .map(|(&i, c)| Ok(stage.score(fb, ds.get(i), i, c)? <= r_init_c))
        .collect::<Result<Vec<bool>>>()?;
    let v = stack(rows12.iter().map(|&i| fb.with_arm(ds.get(i), ds.get(i).a)).collect())?;
    let m = fit_indicator(&v, &labels, cfg)?;
    let m_tilde = if surrogate {
        let vs = stack(rows12.iter().map(|&i| fb.with_arm_surrogate(ds.get(i), i)).collect::<Result<_>>()?)?;
        Some(fit_indicator(&vs, &labels, cfg)?)
    } else {
        None
    };
    stage.cdf = LocalizedCdf { anchor: r_init_c, m, m_tilde };
    Ok(stage)
}
