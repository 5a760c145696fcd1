//! Domain data model: observations, datasets, settings and fold splitting.
//!
//! Missing values are carried by `Option`, never by sentinel numbers. Ground
//! truth for simulated data lives in [`crate::simgen::SimTruth`], outside the
//! observation record, so no pipeline stage can read it.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of features.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. An empty slice yields a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    /// Single-column matrix.
    pub fn column(values: &[f64]) -> Self {
        Matrix { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Copies the selected rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }

    /// Horizontal concatenation.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch { expected: self.rows, got: other.rows });
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Matrix { rows: self.rows, cols, data })
    }
}

/// Which coordinates are observed where.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    /// Semi-supervised: no surrogates anywhere.
    S1,
    /// Surrogate-assisted: surrogates on every unit.
    S2,
    /// Surrogates on source units only.
    S3,
}

impl Setting {
    /// The setting whose influence functions apply. S3 shares S1's.
    pub fn effective(self) -> Setting {
        match self {
            Setting::S3 => Setting::S1,
            s => s,
        }
    }

    pub fn uses_surrogates(self) -> bool {
        self.effective() == Setting::S2
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Setting::S1 => "S1",
            Setting::S2 => "S2",
            Setting::S3 => "S3",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" | "1" => Ok(Setting::S1),
            "S2" | "2" => Ok(Setting::S2),
            "S3" | "3" => Ok(Setting::S3),
            other => Err(Error::InvalidParameter(format!("unknown setting {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeKind {
    Continuous,
    Categorical,
}

/// One coarsened draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub a: u8,
    pub s: Option<Vec<f64>>,
    /// Outcome; a categorical label is stored as its index `1..=K`.
    pub y: Option<f64>,
    pub d: u8,
    pub group: Option<u32>,
}

impl Observation {
    pub fn treated(&self) -> bool {
        self.a == 1
    }

    pub fn source(&self) -> bool {
        self.d == 1
    }
}

/// Monotone transformation applied to outcomes before any contrast is formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum Transform {
    #[default]
    Identity,
    Log,
    /// Utility score per categorical level; entry `k - 1` is the score of label `k`.
    Levels(Vec<f64>),
}

impl Transform {
    pub fn apply(&self, y: f64) -> Result<f64> {
        match self {
            Transform::Identity => Ok(y),
            Transform::Log => {
                if y > 0.0 {
                    Ok(y.ln())
                } else {
                    Err(Error::NonFinite(format!("log of non-positive outcome {y}")))
                }
            }
            Transform::Levels(v) => {
                let k = y as usize;
                if y.fract() != 0.0 || k == 0 || k > v.len() {
                    return Err(Error::LabelOutOfRange { label: y as u32, k: v.len() });
                }
                Ok(v[k - 1])
            }
        }
    }
}

/// Marginal-contrast transformation and miscoverage budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandSpec {
    pub transform: Transform,
    /// Source-stage miscoverage.
    pub alpha: f64,
    /// Nested target-stage miscoverage.
    pub gamma: f64,
}

impl EstimandSpec {
    pub fn new(transform: Transform, alpha: f64, gamma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) || !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha={alpha}, gamma={gamma} must lie in (0,1)")));
        }
        if alpha + gamma >= 1.0 {
            return Err(Error::InvalidParameter("alpha + gamma must be < 1".into()));
        }
        Ok(EstimandSpec { transform, alpha, gamma })
    }

    /// Splits a total budget evenly so target units get `1 - total` coverage.
    pub fn from_total(total: f64) -> Result<Self> {
        EstimandSpec::new(Transform::Identity, total / 2.0, total / 2.0)
    }
}

/// Extended-real interval. Either endpoint may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::InvalidParameter(format!("bad interval [{lower}, {upper}]")));
        }
        Ok(Interval { lower, upper })
    }

    pub fn whole_line() -> Self {
        Interval { lower: f64::NEG_INFINITY, upper: f64::INFINITY }
    }

    pub fn width(&self) -> f64 {
        if self.is_finite() {
            self.upper - self.lower
        } else {
            f64::INFINITY
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }

    /// `v - self`, i.e. `[v - upper, v - lower]`.
    pub fn reflect_from(&self, v: f64) -> Interval {
        Interval { lower: v - self.upper, upper: v - self.lower }
    }

    /// `self - v`.
    pub fn shift(&self, v: f64) -> Interval {
        Interval { lower: self.lower - v, upper: self.upper - v }
    }
}

/// Validated, immutable collection of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    obs: Vec<Observation>,
    setting: Setting,
    kind: OutcomeKind,
    dim_x: usize,
    dim_s: usize,
    n_classes: Option<usize>,
    n_groups: Option<u32>,
    n_d1: usize,
    n_d0: usize,
}

impl Dataset {
    pub fn observations(&self) -> &[Observation] {
        &self.obs
    }

    pub fn get(&self, i: usize) -> &Observation {
        &self.obs[i]
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn setting(&self) -> Setting {
        self.setting
    }

    pub fn kind(&self) -> OutcomeKind {
        self.kind
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_s(&self) -> usize {
        self.dim_s
    }

    pub fn n_classes(&self) -> Option<usize> {
        self.n_classes
    }

    /// Largest group label, when groups are recorded.
    pub fn n_groups(&self) -> Option<u32> {
        self.n_groups
    }

    pub fn n_source(&self) -> usize {
        self.n_d1
    }

    pub fn n_target(&self) -> usize {
        self.n_d0
    }

    /// Number of units in each `(A, D)` cell, indexed `[a][d]`.
    pub fn cell_counts(&self) -> [[usize; 2]; 2] {
        let mut c = [[0usize; 2]; 2];
        for o in &self.obs {
            c[o.a as usize][o.d as usize] += 1;
        }
        c
    }

    /// Same data viewed under a weaker setting (surrogates dropped where required).
    pub fn restrict_to(&self, setting: Setting) -> Result<Dataset> {
        if setting == self.setting {
            return Ok(self.clone());
        }
        let obs = self
            .obs
            .iter()
            .map(|o| {
                let mut o = o.clone();
                match setting {
                    Setting::S1 => o.s = None,
                    Setting::S3 if o.d == 0 => o.s = None,
                    Setting::S3 => {}
                    Setting::S2 => {}
                }
                o
            })
            .collect();
        validate_dataset(obs, setting, self.kind)
    }
}

/// Checks the coarsening invariants and returns a typed dataset.
pub fn validate_dataset(observations: Vec<Observation>, setting: Setting, kind: OutcomeKind) -> Result<Dataset> {
    let first = observations.first().ok_or(Error::EmptyInput)?;
    let dim_x = first.x.len();
    let dim_s = observations.iter().find_map(|o| o.s.as_ref().map(Vec::len)).unwrap_or(0);
    let has_group = first.group.is_some();
    let mut n_d1 = 0;
    let mut max_label = 0usize;
    let mut max_group = 0u32;
    let mut cells = [[0usize; 2]; 2];

    for (i, o) in observations.iter().enumerate() {
        if o.x.len() != dim_x {
            return Err(Error::MixedDimensions(format!("row {i}: x has length {}, expected {dim_x}", o.x.len())));
        }
        if o.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("row {i}: covariate")));
        }
        if o.a > 1 || o.d > 1 {
            return Err(Error::InvalidParameter(format!("row {i}: a and d must be 0 or 1")));
        }
        if let Some(s) = &o.s {
            if s.len() != dim_s {
                return Err(Error::MixedDimensions(format!("row {i}: s has length {}, expected {dim_s}", s.len())));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("row {i}: surrogate")));
            }
        }
        match (o.d, o.y) {
            (1, None) => return Err(Error::MissingnessViolation(format!("row {i}: source unit without outcome"))),
            (0, Some(_)) => {
                return Err(Error::MissingnessViolation(format!("row {i}: target unit with observed outcome")))
            }
            _ => {}
        }
        if let Some(y) = o.y {
            if !y.is_finite() {
                return Err(Error::NonFinite(format!("row {i}: outcome")));
            }
            if kind == OutcomeKind::Categorical {
                if y.fract() != 0.0 || y < 1.0 {
                    return Err(Error::LabelOutOfRange { label: y as u32, k: 0 });
                }
                max_label = max_label.max(y as usize);
            }
        }
        let s_expected = match setting {
            Setting::S1 => false,
            Setting::S2 => true,
            Setting::S3 => o.d == 1,
        };
        if o.s.is_some() != s_expected {
            return Err(Error::MissingnessViolation(format!(
                "row {i}: surrogate {} under {setting}",
                if o.s.is_some() { "present" } else { "absent" }
            )));
        }
        if o.group.is_some() != has_group {
            return Err(Error::MissingnessViolation(format!("row {i}: group label present on some rows only")));
        }
        if let Some(g) = o.group {
            max_group = max_group.max(g);
        }
        cells[o.a as usize][o.d as usize] += 1;
        n_d1 += o.d as usize;
    }
    if setting != Setting::S1 && dim_s == 0 {
        return Err(Error::MissingnessViolation(format!("no surrogates under {setting}")));
    }
    for a in 0..2u8 {
        for d in 0..2u8 {
            if cells[a as usize][d as usize] == 0 {
                return Err(Error::EmptyArm { a, d });
            }
        }
    }
    let n = observations.len();
    Ok(Dataset {
        obs: observations,
        setting,
        kind,
        dim_x,
        dim_s: if setting == Setting::S1 { 0 } else { dim_s },
        n_classes: (kind == OutcomeKind::Categorical).then_some(max_label),
        n_groups: has_group.then_some(max_group),
        n_d1,
        n_d0: n - n_d1,
    })
}

/// Which fold a unit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fold {
    /// Initial-quantile sub-fold of the training fold.
    I11,
    /// Localized-CDF sub-fold of the training fold.
    I12,
    /// Calibration fold.
    I2,
}

/// Partition of dataset indices into training sub-folds and a calibration fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub i11: Vec<usize>,
    pub i12: Vec<usize>,
    pub i2: Vec<usize>,
    pub seed: u64,
    labels: Vec<Fold>,
}

impl FoldAssignment {
    /// Builds an assignment from explicit index sets, checking it partitions `0..n`.
    pub fn from_parts(n: usize, i11: Vec<usize>, i12: Vec<usize>, i2: Vec<usize>, seed: u64) -> Result<Self> {
        let mut labels: Vec<Option<Fold>> = vec![None; n];
        for (set, f) in [(&i11, Fold::I11), (&i12, Fold::I12), (&i2, Fold::I2)] {
            for &i in set {
                if i >= n || labels[i].is_some() {
                    return Err(Error::InvalidParameter(format!("index {i} repeated or out of range")));
                }
                labels[i] = Some(f);
            }
        }
        let labels = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::InvalidParameter(format!("index {i} unassigned"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(FoldAssignment { i11, i12, i2, seed, labels })
    }

    pub fn fold_of(&self, i: usize) -> Fold {
        self.labels[i]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Training fold `I11 ∪ I12`, sorted.
    pub fn i1(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.i11.iter().chain(&self.i12).copied().collect();
        v.sort_unstable();
        v
    }
}

/// Smallest `(A, D)` cell that can be spread over all three folds.
pub const MIN_CELL: usize = 3;

/// Stratified random split: each `(A, D)` cell is shuffled and divided so the
/// training share is `train_fraction`, and the training share is halved into
/// `I11` and `I12`.
pub fn split_folds(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<FoldAssignment> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!("train_fraction {train_fraction} outside (0,1)")));
    }
    let mut cells: [[Vec<usize>; 2]; 2] = Default::default();
    for (i, o) in dataset.observations().iter().enumerate() {
        cells[o.a as usize][o.d as usize].push(i);
    }
    for a in 0..2 {
        for d in 0..2 {
            let size = cells[a][d].len();
            if size < MIN_CELL {
                return Err(Error::CellTooSmall { a: a as u8, d: d as u8, size, min: MIN_CELL });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut i11, mut i12, mut i2) = (Vec::new(), Vec::new(), Vec::new());
    let mut parity = 0usize;
    for a in 0..2 {
        for d in 0..2 {
            let cell = &mut cells[a][d];
            cell.shuffle(&mut rng);
            let size = cell.len();
            let n_train = ((train_fraction * size as f64).round() as usize).clamp(2, size - 1);
            // alternate which sub-fold receives the odd unit so totals stay balanced
            let n11 = (n_train + parity) / 2;
            if n_train % 2 == 1 {
                parity ^= 1;
            }
            i11.extend_from_slice(&cell[..n11]);
            i12.extend_from_slice(&cell[n11..n_train]);
            i2.extend_from_slice(&cell[n_train..]);
        }
    }
    i11.sort_unstable();
    i12.sort_unstable();
    i2.sort_unstable();
    FoldAssignment::from_parts(dataset.len(), i11, i12, i2, seed)
}
