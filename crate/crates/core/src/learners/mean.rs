use crate::data::Matrix;
use crate::error::{Error, Result};

use super::features::{Basis, FeatureMap};
use super::linalg::{dot, NormalEquations};
use super::Predictor;

/// Gram matrices whose eigenvalue ratio falls below this are rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Ridge least-squares conditional mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanModel {
    map: FeatureMap,
    params: Vec<f64>,
}

pub fn fit_mean(features: &Matrix, targets: &[f64], lambda: f64, basis: Basis) -> Result<MeanModel> {
    let n = features.nrows();
    if targets.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: targets.len() });
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("ridge penalty {lambda} must be >= 0")));
    }
    if n < features.ncols() + 1 {
        return Err(Error::InvalidParameter(format!("need at least {} examples, got {n}", features.ncols() + 1)));
    }
    if targets.iter().chain(features.rows_iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mean regression inputs".into()));
    }
    if lambda == 0.0 {
        // the feature map silently drops constant columns, so check the raw
        // design for exact collinearity first
        let mut raw = NormalEquations::new(features.ncols() + 1);
        let mut row = vec![1.0; features.ncols() + 1];
        for r in features.rows_iter() {
            row[1..].copy_from_slice(r);
            raw.add(&row, 1.0, 0.0);
        }
        if raw.conditioning() < RANK_TOL {
            return Err(Error::SingularDesign);
        }
    }
    let map = FeatureMap::fit(features, basis)?;
    let p = map.dim();
    let mut ne = NormalEquations::new(p);
    let mut z = vec![0.0; p];
    for (i, r) in features.rows_iter().enumerate() {
        map.transform_row_into(r, &mut z);
        ne.add(&z, 1.0, targets[i]);
    }
    if lambda == 0.0 && ne.conditioning() < RANK_TOL {
        return Err(Error::SingularDesign);
    }
    ne.add_ridge(lambda);
    let params = ne.solve()?;
    Ok(MeanModel { map, params })
}

impl MeanModel {
    pub fn feature_map(&self) -> &FeatureMap {
        &self.map
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn raw_coefficients(&self) -> (f64, Vec<f64>) {
        self.map.unstandardize(&self.params)
    }
}

impl Predictor for MeanModel {
    fn input_dim(&self) -> usize {
        self.map.input_dim()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        dot(&self.map.transform_row(row), &self.params)
    }
}
