use crate::data::Matrix;
use crate::error::{Error, Result};

use super::features::{Basis, FeatureMap};
use super::linalg::{dot, NormalEquations};
use super::{clip_prob, Predictor};

const MAX_ITER: usize = 500;
const GRAD_TOL: f64 = 1e-8;
/// Linear predictors beyond this magnitude with an unpenalized fit mean the
/// likelihood has no finite maximizer.
const SEPARATION_ETA: f64 = 30.0;

/// Binary probability model with a logistic link.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbModel {
    map: FeatureMap,
    params: Vec<f64>,
    iterations: usize,
}

pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^eta)` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Penalized negative log-likelihood and its gradient, both divided by the
/// total weight. `design` already contains the intercept column.
pub fn logistic_objective(
    design: &Matrix,
    labels: &[bool],
    weights: &[f64],
    lambda: f64,
    params: &[f64],
) -> (f64, Vec<f64>) {
    let p = params.len();
    let total: f64 = weights.iter().sum();
    let mut loss = 0.0;
    let mut grad = vec![0.0; p];
    for i in 0..design.nrows() {
        let x = design.row(i);
        let eta = dot(x, params);
        let y = if labels[i] { 1.0 } else { 0.0 };
        loss += weights[i] * (softplus(eta) - y * eta);
        let r = weights[i] * (sigmoid(eta) - y);
        for j in 0..p {
            grad[j] += r * x[j];
        }
    }
    for j in 1..p {
        loss += lambda * params[j] * params[j];
        grad[j] += 2.0 * lambda * params[j];
    }
    grad.iter_mut().for_each(|g| *g /= total);
    (loss / total, grad)
}

/// Weighted ridge-penalized logistic regression by damped Newton steps.
pub fn fit_logistic(
    features: &Matrix,
    labels: &[bool],
    weights: Option<&[f64]>,
    lambda: f64,
    basis: Basis,
) -> Result<ProbModel> {
    let n = features.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("ridge penalty {lambda} must be >= 0")));
    }
    let unit;
    let w = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: w.len() });
            }
            if let Some(i) = w.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("weight {i} invalid")));
            }
            w
        }
        None => {
            unit = vec![1.0; n];
            &unit[..]
        }
    };
    if features.rows_iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logistic features".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    if lambda == 0.0 && (n_pos == 0 || n_pos == n) {
        return Err(Error::Separation);
    }

    let map = FeatureMap::fit(features, basis)?;
    let design = map.transform(features)?;
    let p = map.dim();
    let mut params = vec![0.0; p];
    // start the intercept at the weighted log-odds, squeezed away from 0/1
    let total: f64 = w.iter().sum();
    let wpos: f64 = labels.iter().zip(w).filter(|(l, _)| **l).map(|(_, w)| w).sum();
    let frac = ((wpos + 0.5) / (total + 1.0)).clamp(1e-6, 1.0 - 1e-6);
    params[0] = (frac / (1.0 - frac)).ln();

    let (mut loss, mut grad) = logistic_objective(&design, labels, w, lambda, &params);
    let mut iterations = 0;
    while iterations < MAX_ITER {
        if norm(&grad) <= GRAD_TOL {
            break;
        }
        iterations += 1;
        let mut ne = NormalEquations::new(p);
        for i in 0..n {
            let x = design.row(i);
            let mu = sigmoid(dot(x, &params));
            ne.add(x, w[i] * mu * (1.0 - mu) / total, 0.0);
        }
        ne.add_ridge(2.0 * lambda / total);
        for (j, g) in grad.iter().enumerate() {
            ne.add_rhs(j, -g);
        }
        let step = ne.solve()?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = params.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let (l, g) = logistic_objective(&design, labels, w, lambda, &trial);
            if l <= loss + 1e-4 * t * dot(&grad, &step) || (l - loss).abs() <= 1e-15 * loss.abs() {
                params = trial;
                loss = l;
                grad = g;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if lambda == 0.0 {
            let max_eta = design.rows_iter().map(|x| dot(x, &params).abs()).fold(0.0, f64::max);
            if max_eta > SEPARATION_ETA {
                return Err(Error::Separation);
            }
        }
        if !accepted {
            break;
        }
    }
    if lambda == 0.0 && norm(&grad) > 1e-6 {
        return Err(Error::Separation);
    }
    Ok(ProbModel { map, params, iterations })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl ProbModel {
    /// Probability before clipping.
    pub fn predict_raw_row(&self, row: &[f64]) -> f64 {
        sigmoid(dot(&self.map.transform_row(row), &self.params))
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.map
    }

    /// Coefficients on the standardized design (intercept first).
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Intercept and slopes on the raw expanded terms.
    pub fn raw_coefficients(&self) -> (f64, Vec<f64>) {
        self.map.unstandardize(&self.params)
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Model with all coefficients set to zero, i.e. constant probability 1/2.
    pub fn zero(map: FeatureMap) -> Self {
        let p = map.dim();
        ProbModel { map, params: vec![0.0; p], iterations: 0 }
    }

    /// Same design with explicit standardized coefficients.
    pub fn with_params(map: FeatureMap, params: Vec<f64>) -> Result<Self> {
        if params.len() != map.dim() {
            return Err(Error::DimensionMismatch { expected: map.dim(), got: params.len() });
        }
        Ok(ProbModel { map, params, iterations: 0 })
    }
}

impl Predictor for ProbModel {
    fn input_dim(&self) -> usize {
        self.map.input_dim()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        clip_prob(self.predict_raw_row(row))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn constant_labels_give_mean_probability() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let m = fit_logistic(&x, &[true; 4], None, 1e-4, Basis::Linear).unwrap();
        for r in x.rows_iter() {
            assert!((m.predict_raw_row(r) - 1.0).abs() < 1e-3);
        }
        let labels = [true, false, true, false];
        let xc = Matrix::from_rows(&[[1.0], [1.0], [1.0], [1.0]]).unwrap();
        let m = fit_logistic(&xc, &labels, None, 1e-4, Basis::Linear).unwrap();
        assert!((m.predict_row(&[1.0]) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn separable_data_detected() {
        let xs: Vec<[f64; 1]> = (-10..10).map(|i| [i as f64 + 0.5]).collect();
        let x = Matrix::from_rows(&xs).unwrap();
        let labels: Vec<bool> = xs.iter().map(|r| r[0] > 0.0).collect();
        assert_eq!(fit_logistic(&x, &labels, None, 0.0, Basis::Linear), Err(Error::Separation));
        assert!(fit_logistic(&x, &labels, None, 1.0, Basis::Linear).is_ok());
    }

    #[test]
    fn zero_coefficients_and_clipping() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let map = FeatureMap::fit(&x, Basis::Linear).unwrap();
        let z = ProbModel::zero(map.clone());
        assert_eq!(z.predict(&x).unwrap(), vec![0.5, 0.5]);
        // standardized x for raw 1.0 is +1; intercept 19 + slope 1 gives logit 20
        let m = ProbModel::with_params(map, vec![19.0, 1.0]).unwrap();
        assert_eq!(m.predict_row(&[1.0]), 1.0 - 1e-3);
    }

    #[test]
    fn recovers_simulated_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 50_000;
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.sample(StandardNormal);
            let p = sigmoid(1.0 + 2.0 * x);
            rows.push([x]);
            labels.push(rng.random::<f64>() < p);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let m = fit_logistic(&x, &labels, None, 0.0, Basis::Linear).unwrap();
        let (b0, b) = m.raw_coefficients();
        assert!((b0 - 1.0).abs() < 0.1, "intercept {b0}");
        assert!((b[0] - 2.0).abs() < 0.1, "slope {}", b[0]);
    }

    #[test]
    fn gradient_matches_finite_differences_and_vanishes_at_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<[f64; 2]> = (0..300).map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)]).collect();
        let labels: Vec<bool> = rows.iter().map(|r| rng.random::<f64>() < sigmoid(0.3 + r[0] - 0.7 * r[1])).collect();
        let weights: Vec<f64> = (0..300).map(|_| 0.5 + rng.random::<f64>()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let lambda = 0.05;
        let m = fit_logistic(&x, &labels, Some(&weights), lambda, Basis::Quadratic).unwrap();
        let design = m.feature_map().transform(&x).unwrap();
        let (_, g) = logistic_objective(&design, &labels, &weights, lambda, m.params());
        assert!(norm(&g) <= 1e-6);

        let params: Vec<f64> = (0..m.params().len()).map(|_| rng.random::<f64>() - 0.5).collect();
        let (_, g) = logistic_objective(&design, &labels, &weights, lambda, &params);
        for j in 0..params.len() {
            let h = 1e-6;
            let mut up = params.clone();
            up[j] += h;
            let mut dn = params.clone();
            dn[j] -= h;
            let fd = (logistic_objective(&design, &labels, &weights, lambda, &up).0
                - logistic_objective(&design, &labels, &weights, lambda, &dn).0)
                / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-4 * g[j].abs().max(1e-3), "{j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(matches!(fit_logistic(&x, &[true], None, 1.0, Basis::Linear), Err(Error::DimensionMismatch { .. })));
        let m = fit_logistic(&x, &[true, false], None, 1.0, Basis::Linear).unwrap();
        let bad = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        assert!(m.predict(&bad).is_err());
    }
}
