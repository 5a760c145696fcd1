use nalgebra::{DMatrix, DVector};

use crate::data::Matrix;
use crate::error::{Error, Result};

use super::features::{Basis, FeatureMap};
use super::linalg::{dot, NormalEquations};
use super::Predictor;

const REL_TOL: f64 = 1e-9;
const MAX_MM_ITER: usize = 2000;

/// Linear conditional-quantile model fitted by pinball-loss minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileModel {
    tau: f64,
    map: FeatureMap,
    params: Vec<f64>,
}

pub fn pinball(tau: f64, r: f64) -> f64 {
    if r >= 0.0 {
        tau * r
    } else {
        (tau - 1.0) * r
    }
}

/// `Σ ρ_τ(y - Xβ) + λ‖β₁..‖²` on a design that includes the intercept column.
pub fn pinball_objective(design: &Matrix, y: &[f64], tau: f64, lambda: f64, params: &[f64]) -> f64 {
    let loss: f64 = (0..design.nrows()).map(|i| pinball(tau, y[i] - dot(design.row(i), params))).sum();
    loss + lambda * params[1..].iter().map(|b| b * b).sum::<f64>()
}

/// Fits `q_τ(x) = β·φ(x)` by majorize–minimize iterations on a smoothed
/// absolute value, then (when unpenalized) snaps to the exact interpolating
/// vertex of the linear program. The result is never worse than the
/// intercept-only τ-quantile.
pub fn fit_quantile(features: &Matrix, targets: &[f64], tau: f64, lambda: f64, basis: Basis) -> Result<QuantileModel> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile level {tau} outside (0,1)")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("ridge penalty {lambda} must be >= 0")));
    }
    let n = features.nrows();
    if targets.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: targets.len() });
    }
    if n < features.ncols() + 2 {
        return Err(Error::InvalidParameter(format!("need at least {} examples, got {n}", features.ncols() + 2)));
    }
    if targets.iter().chain(features.rows_iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quantile regression inputs".into()));
    }
    let map = FeatureMap::fit(features, basis)?;
    let design = map.transform(features)?;
    let p = map.dim();

    let mut sorted = targets.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((tau * n as f64).ceil() as usize).clamp(1, n) - 1;
    let mut baseline = vec![0.0; p];
    baseline[0] = sorted[k];
    let base_obj = pinball_objective(&design, targets, tau, lambda, &baseline);

    let scale = {
        let mad: f64 = targets.iter().map(|y| (y - sorted[n / 2]).abs()).sum::<f64>() / n as f64;
        mad.max(1e-8)
    };

    // least-squares start
    let mut ne = NormalEquations::new(p);
    for i in 0..n {
        ne.add(design.row(i), 1.0, targets[i]);
    }
    ne.add_ridge(lambda + 1e-8 * n as f64);
    let mut params = ne.solve()?;
    let mut obj = pinball_objective(&design, targets, tau, lambda, &params);

    let mut eps = 1e-2 * scale;
    let eps_min = 1e-10 * scale;
    let mut iters = 0;
    while iters < MAX_MM_ITER {
        iters += 1;
        let mut ne = NormalEquations::new(p);
        for i in 0..n {
            let x = design.row(i);
            let r = targets[i] - dot(x, &params);
            let w = 0.5 / (r.abs() + eps);
            ne.add(x, w, targets[i]);
        }
        let tilt = 0.5 * (2.0 * tau - 1.0);
        for i in 0..n {
            for (j, xj) in design.row(i).iter().enumerate() {
                ne.add_rhs(j, tilt * xj);
            }
        }
        ne.add_ridge(2.0 * lambda);
        let next = ne.solve()?;
        let next_obj = pinball_objective(&design, targets, tau, lambda, &next);
        let change = (obj - next_obj).abs() / obj.abs().max(1e-300);
        if next_obj <= obj {
            params = next;
            obj = next_obj;
        }
        if change <= REL_TOL {
            if eps <= eps_min {
                break;
            }
            eps = (eps * 1e-2).max(eps_min);
        }
    }

    if lambda == 0.0 {
        if let Some((cand, cand_obj)) = polish(&design, targets, tau, &params) {
            if cand_obj <= obj {
                params = cand;
                obj = cand_obj;
            }
        }
    }
    if obj > base_obj {
        params = baseline;
    }
    Ok(QuantileModel { tau, map, params })
}

/// Exact LP refinement: starting from the `p` smallest residuals, solve the
/// interpolation system and take simplex exchange steps while the dual
/// multipliers of the basic points leave `[τ-1, τ]`.
fn polish(design: &Matrix, y: &[f64], tau: f64, start: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = design.nrows();
    let p = design.ncols();
    let resid = |beta: &[f64], i: usize| y[i] - dot(design.row(i), beta);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| resid(start, a).abs().total_cmp(&resid(start, b).abs()));

    let mut basis: Vec<usize> = Vec::with_capacity(p);
    for &i in &order {
        basis.push(i);
        if !rank_ok(design, &basis) {
            basis.pop();
        } else if basis.len() == p {
            break;
        }
    }
    if basis.len() < p {
        return None;
    }
    let mut beta = interpolate(design, y, &basis)?;
    let mut obj = pinball_objective(design, y, tau, 0.0, &beta);
    let mut in_basis = vec![false; n];
    basis.iter().for_each(|&i| in_basis[i] = true);

    for _ in 0..(50 * p + 200) {
        let xb = DMatrix::from_fn(p, p, |r, c| design.get(basis[r], c));
        let inv = xb.try_inverse()?;
        let r: Vec<f64> = (0..n).map(|i| resid(&beta, i)).collect();
        let mut g = DVector::zeros(p);
        for i in (0..n).filter(|&i| !in_basis[i]) {
            let psi = if r[i] > 0.0 {
                tau
            } else if r[i] < 0.0 {
                tau - 1.0
            } else {
                0.0
            };
            for c in 0..p {
                g[c] += psi * design.get(i, c);
            }
        }
        // optimal iff the basic multipliers u = -X_B^{-T} g lie in [τ-1, τ]
        let u = inv.transpose() * (-&g);
        let tol = 1e-10 * (1.0 + g.amax());
        let Some(k) = (0..p).find(|&k| u[k] > tau + tol || u[k] < tau - 1.0 - tol) else {
            return Some((beta, obj));
        };
        // releasing basic point k below the fit (σ=+1) or above it (σ=-1)
        let sigma = if u[k] < tau - 1.0 { 1.0 } else { -1.0 };
        let dir: Vec<f64> = (0..p).map(|c| sigma * inv[(c, k)]).collect();
        let mut slope = sigma * u[k] + if sigma > 0.0 { 1.0 - tau } else { tau };
        let mut breaks: Vec<(f64, f64, usize)> = Vec::new();
        for i in (0..n).filter(|&i| !in_basis[i]) {
            let s = dot(design.row(i), &dir);
            if s == 0.0 {
                continue;
            }
            if r[i] == 0.0 {
                slope += if s > 0.0 { (1.0 - tau) * s } else { -tau * s };
                // ψ(0) was counted as zero in g
                continue;
            }
            let t = r[i] / s;
            if t > 0.0 {
                breaks.push((t, s.abs(), i));
            }
        }
        if slope >= 0.0 {
            return Some((beta, obj));
        }
        breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut entering = None;
        for &(t, w, i) in &breaks {
            slope += w;
            if slope >= 0.0 {
                entering = Some((t, i));
                break;
            }
        }
        let (t, i) = entering?;
        let cand_basis: Vec<usize> = basis.iter().enumerate().map(|(j, &b)| if j == k { i } else { b }).collect();
        let cand = interpolate(design, y, &cand_basis)
            .unwrap_or_else(|| beta.iter().zip(&dir).map(|(b, d)| b + t * d).collect());
        let cand_obj = pinball_objective(design, y, tau, 0.0, &cand);
        if cand_obj > obj + 1e-12 * obj.abs().max(1.0) {
            return Some((beta, obj));
        }
        in_basis[basis[k]] = false;
        in_basis[i] = true;
        basis = cand_basis;
        beta = cand;
        obj = cand_obj;
    }
    Some((beta, obj))
}

fn rank_ok(design: &Matrix, rows: &[usize]) -> bool {
    let m = rows.len();
    let p = design.ncols();
    let a = DMatrix::from_fn(m, p, |r, c| design.get(rows[r], c));
    let sv = a.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    max > 0.0 && min / max > 1e-8
}

fn interpolate(design: &Matrix, y: &[f64], basis: &[usize]) -> Option<Vec<f64>> {
    let p = design.ncols();
    let a = DMatrix::from_fn(p, p, |r, c| design.get(basis[r], c));
    let b = DVector::from_iterator(p, basis.iter().map(|&i| y[i]));
    a.lu().solve(&b).map(|v| v.iter().copied().collect())
}

impl QuantileModel {
    pub fn tau(&self) -> f64 {
        self.tau
    }

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

impl Predictor for QuantileModel {
    fn input_dim(&self) -> usize {
        self.map.input_dim()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        dot(&self.map.transform_row(row), &self.params)
    }
}

/// Lower/upper quantile pair with crossing repair at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantilePair {
    pub lower: QuantileModel,
    pub upper: QuantileModel,
}

impl QuantilePair {
    /// `(lo, hi)` with `lo <= hi`; crossed predictions are swapped.
    pub fn predict_row(&self, row: &[f64]) -> (f64, f64) {
        let lo = self.lower.predict_row(row);
        let hi = self.upper.predict_row(row);
        if lo <= hi {
            (lo, hi)
        } else {
            (hi, lo)
        }
    }
}
