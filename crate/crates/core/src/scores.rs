//! Non-conformity scores and the prediction sets they induce.
//!
//! Every score `R(w, y)` comes with an inversion `set(w, r) = {y : R(w, y) <= r}`.
//! Inversions return `None` for the empty set.

use serde::{Deserialize, Serialize};

use crate::data::Interval;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreKind {
    Cqr,
    AbsResidual,
    IntervalCqr,
    CategoricalProb,
}

fn finite(vals: &[f64], what: &str) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// `max(q_lo - y, y - q_hi)`; non-positive iff `y` lies in `[q_lo, q_hi]`.
pub fn cqr_score(q_lo: f64, q_hi: f64, y: f64) -> Result<f64> {
    finite(&[q_lo, q_hi, y], "cqr score")?;
    Ok((q_lo - y).max(y - q_hi))
}

pub fn cqr_invert(q_lo: f64, q_hi: f64, r: f64) -> Option<Interval> {
    if r == f64::INFINITY {
        return Some(Interval::whole_line());
    }
    let (lo, hi) = (q_lo - r, q_hi + r);
    (lo <= hi).then_some(Interval { lower: lo, upper: hi })
}

pub fn abs_residual_score(mu: f64, y: f64) -> Result<f64> {
    finite(&[mu, y], "residual score")?;
    Ok((y - mu).abs())
}

pub fn abs_residual_invert(mu: f64, r: f64) -> Option<Interval> {
    cqr_invert(mu, mu, r)
}

/// Score of an interval-valued response against the endpoint means
/// `(m_l, m_r)`. An unbounded response scores `+∞`.
pub fn interval_score(m_l: f64, m_r: f64, c: &Interval) -> Result<f64> {
    finite(&[m_l, m_r], "endpoint means")?;
    if c.lower.is_nan() || c.upper.is_nan() {
        return Err(Error::NonFinite("interval response".into()));
    }
    Ok((m_l - c.lower).max(c.upper - m_r))
}

/// `[m_l - r, m_r + r]`, which contains `c` iff `interval_score(m_l, m_r, c) <= r`.
pub fn interval_invert(m_l: f64, m_r: f64, r: f64) -> Option<Interval> {
    cqr_invert(m_l, m_r, r)
}

/// Subset of the labels `1..=k`, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PredictionSet {
    labels: Vec<u32>,
}

impl PredictionSet {
    pub fn new(mut labels: Vec<u32>) -> Self {
        labels.sort_unstable();
        labels.dedup();
        PredictionSet { labels }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: u32) -> bool {
        self.labels.binary_search(&label).is_ok()
    }

    pub fn is_subset(&self, other: &PredictionSet) -> bool {
        self.labels.iter().all(|&l| other.contains(l))
    }
}

/// `1 - p_y` for a label in `1..=k`.
pub fn categorical_score(class_probs: &[f64], y: u32) -> Result<f64> {
    let k = class_probs.len();
    if y == 0 || y as usize > k {
        return Err(Error::LabelOutOfRange { label: y, k });
    }
    finite(class_probs, "class probabilities")?;
    Ok(1.0 - class_probs[y as usize - 1])
}

/// `{y : 1 - p_y <= r}`; the mode enters first as `r` grows.
pub fn categorical_set(class_probs: &[f64], r: f64) -> PredictionSet {
    PredictionSet {
        labels: (0..class_probs.len()).filter(|&c| 1.0 - class_probs[c] <= r).map(|c| c as u32 + 1).collect(),
    }
}
