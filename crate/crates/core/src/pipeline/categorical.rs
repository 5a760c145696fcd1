//! Categorical outcomes: per-arm prediction sets for `Y(a)` on units observed
//! on arm `a`, calibrated from source to target units with the nested-stage
//! influence function and the score `1 - p̂_y(W)`.

use serde::{Deserialize, Serialize};

use crate::data::{split_folds, Dataset, Fold, FoldAssignment, Observation, OutcomeKind, Setting};
use crate::eif::{
    candidate_grid, psi_target, solve_quantile, weighted_cqr_quantile, EifUnit, EifWeights, QuantileSolution,
};
use crate::error::{Error, Result};
use crate::learners::{
    fit_logistic, fit_multinomial, Basis, ClassProbModel, LearnerConfig, Predictor, ProbModel, PROB_CLIP,
};
use crate::scores::{categorical_score, categorical_set, PredictionSet};

use super::features::{stack, FeatureBuilder};
use super::nuisance::{check_rows, fit_indicator, select, Ledger, LocalizedCdf, Provenance};
use super::{Method, DEFAULT_TRAIN_FRACTION};

const I1: [Fold; 2] = [Fold::I11, Fold::I12];

/// Multinomial model over the labels seen in training; unseen labels get
/// probability zero before the uniform mixing.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    model: ClassProbModel,
    /// Observed labels in increasing order; model class `c` is `labels[c]`.
    labels: Vec<u32>,
    k: usize,
}

impl ClassModel {
    fn fit(x: &crate::data::Matrix, y: &[u32], k: usize, lambda: f64) -> Result<Self> {
        let mut labels: Vec<u32> = y.to_vec();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() < 2 {
            return Err(Error::MissingClass(if labels.first() == Some(&1) { 2 } else { 1 }));
        }
        let compact: Vec<u32> = y.iter().map(|v| labels.binary_search(v).expect("label present") as u32 + 1).collect();
        let model = fit_multinomial(x, &compact, labels.len(), lambda, Basis::Linear)?;
        Ok(ClassModel { model, labels, k })
    }

    /// Probabilities of labels `1..=k`, each at least `PROB_CLIP`.
    pub fn predict_row(&self, row: &[f64]) -> Vec<f64> {
        let raw = self.model.predict_raw_row(row);
        let mut p = vec![0.0; self.k];
        for (c, &l) in self.labels.iter().enumerate() {
            p[l as usize - 1] = raw[c];
        }
        let kf = self.k as f64;
        p.into_iter().map(|v| (1.0 - kf * PROB_CLIP) * v + PROB_CLIP).collect()
    }
}

/// One score variant: class models and localized CDFs per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVariant {
    pub surrogate: bool,
    pub class: [ClassModel; 2],
    pub cdf: [LocalizedCdf; 2],
}

fn class_probs(
    surrogate: bool,
    class: &[ClassModel; 2],
    fb: &FeatureBuilder,
    o: &Observation,
    id: usize,
) -> Result<Vec<f64>> {
    let row = if surrogate { fb.with_surrogate(o, id)? } else { fb.base(o) };
    Ok(class[o.a as usize].predict_row(&row))
}

fn class_score(
    surrogate: bool,
    class: &[ClassModel; 2],
    fb: &FeatureBuilder,
    o: &Observation,
    id: usize,
) -> Result<f64> {
    let y = o.y.ok_or(Error::MissingScore(id))?;
    categorical_score(&class_probs(surrogate, class, fb, o, id)?, y as u32)
}

impl ScoreVariant {
    /// Class probabilities for `Y(o.a)`.
    pub fn probs(&self, fb: &FeatureBuilder, o: &Observation, id: usize) -> Result<Vec<f64>> {
        class_probs(self.surrogate, &self.class, fb, o, id)
    }

    pub fn score(&self, fb: &FeatureBuilder, o: &Observation, id: usize) -> Result<f64> {
        class_score(self.surrogate, &self.class, fb, o, id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalBundle {
    pub setting: Setting,
    pub alpha: f64,
    pub features: FeatureBuilder,
    /// `P(D=1 | X, A)`.
    pub e_d: ProbModel,
    /// Scores from `(X, group)`.
    pub plain: ScoreVariant,
    /// Scores from `(X, group, S)`; present only when surrogates are used.
    pub surrogate: Option<ScoreVariant>,
    pub provenance: Vec<Provenance>,
}

impl CategoricalBundle {
    pub fn weights(&self, o: &Observation) -> EifWeights {
        let e_d = self.e_d.predict_row(&self.features.with_arm(o, o.a));
        // only the source propensity of the unit's own arm enters
        EifWeights::new(0.5, e_d, e_d, e_d)
    }

    pub fn variant(&self, method: Method) -> Result<&ScoreVariant> {
        if method == Method::Science {
            self.surrogate.as_ref().ok_or_else(|| Error::IncompatibleMethodSetting {
                method: method.name().into(),
                setting: self.setting.to_string(),
            })
        } else {
            Ok(&self.plain)
        }
    }

    pub fn verify_provenance(&self, folds: &FoldAssignment) -> Result<()> {
        self.provenance.iter().try_for_each(|p| check_rows(folds, p.model, &p.allowed, &p.rows))
    }
}

#[allow(clippy::too_many_arguments)]
fn fit_variant(
    ds: &Dataset,
    folds: &FoldAssignment,
    rec: &mut Ledger<'_>,
    fb: &FeatureBuilder,
    e_d: &ProbModel,
    alpha: f64,
    surrogate: bool,
    cfg: &LearnerConfig,
) -> Result<ScoreVariant> {
    let k = ds.n_classes().ok_or_else(|| Error::InvalidParameter("categorical outcomes required".into()))?;
    let inputs = |i: usize| -> Result<Vec<f64>> {
        if surrogate {
            fb.with_surrogate(ds.get(i), i)
        } else {
            Ok(fb.base(ds.get(i)))
        }
    };
    let mut class = Vec::with_capacity(2);
    for a in 0..2u8 {
        let rows = rec.record("class probabilities", &I1, select(ds, folds, &I1, |o| o.a == a && o.d == 1))?;
        let x = stack(rows.iter().map(|&i| inputs(i)).collect::<Result<_>>()?)?;
        let y: Vec<u32> = rows.iter().map(|&i| ds.get(i).y.expect("validated source outcome") as u32).collect();
        class.push(ClassModel::fit(&x, &y, k, cfg.ridge(rows.len()))?);
    }
    let c1 = class.pop().expect("two arms");
    let c0 = class.pop().expect("two arms");
    let class = [c0, c1];
    let mut cdf = Vec::with_capacity(2);
    for a in 0..2u8 {
        let rows =
            rec.record("initial quantile", &[Fold::I11], select(ds, folds, &[Fold::I11], |o| o.a == a && o.d == 1))?;
        let scores =
            rows.iter().map(|&i| class_score(surrogate, &class, fb, ds.get(i), i)).collect::<Result<Vec<f64>>>()?;
        let weights: Vec<f64> = rows
            .iter()
            .map(|&i| {
                let o = ds.get(i);
                let e = crate::learners::clip_prob(e_d.predict_row(&fb.with_arm(o, o.a)));
                (1.0 - e) / e
            })
            .collect();
        let r = weighted_cqr_quantile(&scores, &weights, alpha)?;
        let anchor = if r.is_finite() {
            r
        } else {
            scores.iter().copied().filter(|s| s.is_finite()).reduce(f64::max).ok_or(Error::NoScoredUnits)?
        };

        let rows =
            rec.record("localized cdf", &[Fold::I12], select(ds, folds, &[Fold::I12], |o| o.a == a && o.d == 1))?;
        let labels = rows
            .iter()
            .map(|&i| Ok(class_score(surrogate, &class, fb, ds.get(i), i)? <= anchor))
            .collect::<Result<Vec<bool>>>()?;
        let x = stack(rows.iter().map(|&i| fb.base(ds.get(i))).collect())?;
        let m = fit_indicator(&x, &labels, cfg)?;
        let m_tilde = if surrogate {
            let xs = stack(rows.iter().map(|&i| fb.with_surrogate(ds.get(i), i)).collect::<Result<_>>()?)?;
            Some(fit_indicator(&xs, &labels, cfg)?)
        } else {
            None
        };
        cdf.push(LocalizedCdf { anchor, m, m_tilde });
    }
    let cdf1 = cdf.pop().expect("two arms");
    let cdf0 = cdf.pop().expect("two arms");
    Ok(ScoreVariant { surrogate, class, cdf: [cdf0, cdf1] })
}

/// Fits the categorical nuisance components on `I1`.
pub fn fit_categorical(
    ds: &Dataset,
    folds: &FoldAssignment,
    alpha: f64,
    setting: Setting,
    cfg: &LearnerConfig,
) -> Result<CategoricalBundle> {
    if ds.kind() != OutcomeKind::Categorical {
        return Err(Error::InvalidParameter("categorical outcomes required".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0,1)")));
    }
    let surrogate = setting.effective() == Setting::S2;
    if surrogate && ds.setting() != Setting::S2 {
        return Err(Error::IncompatibleMethodSetting {
            method: format!("analysis under {setting}"),
            setting: ds.setting().to_string(),
        });
    }
    let fb = FeatureBuilder::new(ds);
    let mut rec = Ledger::new(folds);
    let rows = rec.record("e_D", &I1, select(ds, folds, &I1, |_| true))?;
    let x = stack(rows.iter().map(|&i| fb.with_arm(ds.get(i), ds.get(i).a)).collect())?;
    let labels: Vec<bool> = rows.iter().map(|&i| ds.get(i).d == 1).collect();
    let e_d = fit_logistic(&x, &labels, None, cfg.ridge(rows.len()), cfg.basis)?;
    let plain = fit_variant(ds, folds, &mut rec, &fb, &e_d, alpha, false, cfg)?;
    let surrogate_variant =
        if surrogate { Some(fit_variant(ds, folds, &mut rec, &fb, &e_d, alpha, true, cfg)?) } else { None };
    Ok(CategoricalBundle {
        setting,
        alpha,
        features: fb,
        e_d,
        plain,
        surrogate: surrogate_variant,
        provenance: rec.records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoricalCalibration {
    pub method: Method,
    /// Score quantile per arm.
    pub arm: [QuantileSolution; 2],
}

/// Calibrates per-arm score quantiles on `I2`, moving from source units to
/// target units within each arm.
pub fn calibrate_categorical(
    ds: &Dataset,
    folds: &FoldAssignment,
    bundle: &CategoricalBundle,
    method: Method,
) -> Result<CategoricalCalibration> {
    method.check(bundle.setting)?;
    bundle.verify_provenance(folds)?;
    let variant = bundle.variant(method)?;
    let fb = &bundle.features;
    let eif_setting = if method == Method::Science { Setting::S2 } else { Setting::S1 };
    let mut arm = [QuantileSolution { r_hat: f64::INFINITY, attained: false }; 2];
    for a in 0..2u8 {
        let cdf = &variant.cdf[a as usize];
        let units = folds
            .i2
            .iter()
            .filter(|&&i| ds.get(i).a == a)
            .map(|&i| {
                let o = ds.get(i);
                let score = if o.d == 1 { Some(variant.score(fb, o, i)?) } else { None };
                let m = cdf.m.predict_row(&fb.base(o));
                let m_tilde = match &cdf.m_tilde {
                    Some(model) => Some(model.predict_row(&fb.with_surrogate(o, i)?)),
                    None => None,
                };
                Ok(EifUnit { id: i, a: o.a, d: o.d, score, w: bundle.weights(o), m, m_tilde })
            })
            .collect::<Result<Vec<EifUnit>>>()?;
        arm[a as usize] = match method {
            Method::Wcqr => {
                let scored: Vec<&EifUnit> = units.iter().filter(|u| u.score.is_some()).collect();
                if scored.is_empty() {
                    return Err(Error::NoScoredUnits);
                }
                let scores: Vec<f64> = scored.iter().filter_map(|u| u.score).collect();
                let weights: Vec<f64> = scored.iter().map(|u| u.w.pi_d).collect();
                let r = weighted_cqr_quantile(&scores, &weights, bundle.alpha)?;
                QuantileSolution { r_hat: r, attained: r.is_finite() }
            }
            Method::NoSurr | Method::Science => {
                let grid = candidate_grid(units.iter().filter_map(|u| u.score));
                solve_quantile(&units, |r, u| psi_target(r, u, eif_setting, bundle.alpha), &grid)?
            }
        };
    }
    Ok(CategoricalCalibration { method, arm })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalPrediction {
    pub id: usize,
    pub a: u8,
    pub d: u8,
    pub group: Option<u32>,
    /// Prediction set for `Y(a)` on the unit's own arm.
    pub set: PredictionSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalResult {
    pub method: Method,
    pub calibration: CategoricalCalibration,
    pub units: Vec<CategoricalPrediction>,
}

pub fn predict_sets<'a>(
    units: impl IntoIterator<Item = (usize, &'a Observation)>,
    bundle: &CategoricalBundle,
    cal: &CategoricalCalibration,
) -> Result<CategoricalResult> {
    let variant = bundle.variant(cal.method)?;
    let out = units
        .into_iter()
        .map(|(id, o)| {
            let p = variant.probs(&bundle.features, o, id)?;
            let set = categorical_set(&p, cal.arm[o.a as usize].r_hat);
            Ok(CategoricalPrediction { id, a: o.a, d: o.d, group: o.group, set })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CategoricalResult { method: cal.method, calibration: *cal, units: out })
}

/// Splits, fits once and calibrates each method; predictions cover `I2`.
pub fn run_categorical(
    ds: &Dataset,
    alpha: f64,
    setting: Setting,
    methods: &[Method],
    seed: u64,
    cfg: &LearnerConfig,
) -> Result<(FoldAssignment, Vec<CategoricalResult>)> {
    run_categorical_with(ds, alpha, setting, methods, seed, cfg, DEFAULT_TRAIN_FRACTION)
}

pub fn run_categorical_with(
    ds: &Dataset,
    alpha: f64,
    setting: Setting,
    methods: &[Method],
    seed: u64,
    cfg: &LearnerConfig,
    train_fraction: f64,
) -> Result<(FoldAssignment, Vec<CategoricalResult>)> {
    for m in methods {
        m.check(setting)?;
    }
    let folds = split_folds(ds, train_fraction, seed)?;
    let bundle = fit_categorical(ds, &folds, alpha, setting, cfg)?;
    let results = methods
        .iter()
        .map(|&m| {
            let cal = calibrate_categorical(ds, &folds, &bundle, m)?;
            predict_sets(folds.i2.iter().map(|&i| (i, ds.get(i))), &bundle, &cal)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((folds, results))
}
