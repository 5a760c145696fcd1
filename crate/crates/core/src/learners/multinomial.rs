use nalgebra::{DMatrix, DVector};

use crate::data::Matrix;
use crate::error::{Error, Result};

use super::features::{Basis, FeatureMap};
use super::linalg::{dot, solve_spd};
use super::PROB_CLIP;

const MAX_ITER: usize = 200;
const GRAD_TOL: f64 = 1e-7;

/// Multinomial logistic model with class 1 as the reference category.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbModel {
    k: usize,
    map: FeatureMap,
    /// `(k - 1)` blocks of `map.dim()` coefficients, classes `2..=k`.
    params: Vec<f64>,
}

fn softmax_into(map: &FeatureMap, params: &[f64], z: &[f64], k: usize, out: &mut [f64]) {
    let p = map.dim();
    out[0] = 0.0;
    for c in 1..k {
        out[c] = dot(z, &params[(c - 1) * p..c * p]);
    }
    let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in out.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    out.iter_mut().for_each(|v| *v /= total);
}

/// Mean penalized negative log-likelihood and gradient on a standardized
/// design (intercept column first). Labels are zero-based here.
pub fn multinomial_objective(
    design: &Matrix,
    labels: &[usize],
    k: usize,
    lambda: f64,
    params: &[f64],
) -> (f64, Vec<f64>) {
    let n = design.nrows();
    let p = design.ncols();
    let mut loss = 0.0;
    let mut grad = vec![0.0; (k - 1) * p];
    let mut eta = vec![0.0; k];
    for i in 0..n {
        let z = design.row(i);
        for c in 1..k {
            eta[c] = dot(z, &params[(c - 1) * p..c * p]);
        }
        eta[0] = 0.0;
        let max = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + eta.iter().map(|e| (e - max).exp()).sum::<f64>().ln();
        loss += lse - eta[labels[i]];
        for c in 1..k {
            let r = (eta[c] - lse).exp() - if labels[i] == c { 1.0 } else { 0.0 };
            for j in 0..p {
                grad[(c - 1) * p + j] += r * z[j];
            }
        }
    }
    for c in 1..k {
        for j in 1..p {
            let b = params[(c - 1) * p + j];
            loss += lambda * b * b;
            grad[(c - 1) * p + j] += 2.0 * lambda * b;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n as f64);
    (loss / n as f64, grad)
}

/// Ridge-penalized multinomial logistic regression by damped Newton steps.
/// `labels` take values in `1..=k`.
pub fn fit_multinomial(
    features: &Matrix,
    labels: &[u32],
    k: usize,
    lambda: f64,
    basis: Basis,
) -> Result<ClassProbModel> {
    let n = features.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
    }
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 classes, got {k}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("ridge penalty {lambda} must be > 0")));
    }
    if features.rows_iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("multinomial features".into()));
    }
    let mut counts = vec![0usize; k];
    for &l in labels {
        if l == 0 || l as usize > k {
            return Err(Error::LabelOutOfRange { label: l, k });
        }
        counts[l as usize - 1] += 1;
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingClass(c as u32 + 1));
    }
    let zero_based: Vec<usize> = labels.iter().map(|&l| l as usize - 1).collect();

    let map = FeatureMap::fit(features, basis)?;
    let design = map.transform(features)?;
    let p = map.dim();
    let q = (k - 1) * p;
    let mut params = vec![0.0; q];
    for c in 1..k {
        params[(c - 1) * p] = (counts[c] as f64 / counts[0] as f64).ln();
    }
    let (mut loss, mut grad) = multinomial_objective(&design, &zero_based, k, lambda, &params);
    let mut prob = vec![0.0; k];
    for _ in 0..MAX_ITER {
        if grad.iter().map(|g| g * g).sum::<f64>().sqrt() <= GRAD_TOL {
            break;
        }
        let mut h = DMatrix::<f64>::zeros(q, q);
        let mut outer = vec![0.0; p * p];
        for i in 0..n {
            let z = design.row(i);
            softmax_into(&map, &params, z, k, &mut prob);
            for a in 0..p {
                for b in 0..=a {
                    outer[a * p + b] = z[a] * z[b];
                }
            }
            for c1 in 1..k {
                for c2 in 1..=c1 {
                    let w = prob[c1] * (if c1 == c2 { 1.0 } else { 0.0 } - prob[c2]);
                    let (r0, c0) = ((c1 - 1) * p, (c2 - 1) * p);
                    for a in 0..p {
                        for b in 0..=a {
                            h[(r0 + a, c0 + b)] += w * outer[a * p + b];
                        }
                    }
                }
            }
        }
        // mirror the lower triangle of every block into a full symmetric matrix
        for c1 in 1..k {
            for c2 in 1..=c1 {
                let (r0, c0) = ((c1 - 1) * p, (c2 - 1) * p);
                for a in 0..p {
                    for b in 0..a {
                        h[(r0 + b, c0 + a)] = h[(r0 + a, c0 + b)];
                    }
                }
            }
        }
        for r in 0..q {
            for c in 0..r {
                h[(c, r)] = h[(r, c)];
            }
        }
        h /= n as f64;
        for c in 1..k {
            for j in 1..p {
                let idx = (c - 1) * p + j;
                h[(idx, idx)] += 2.0 * lambda / n as f64;
            }
        }
        let step = solve_spd(h, DVector::from_iterator(q, grad.iter().map(|g| -g)))?;
        let slope = dot(&grad, &step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = params.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let (l, g) = multinomial_objective(&design, &zero_based, k, lambda, &trial);
            if l <= loss + 1e-4 * t * slope || (l - loss).abs() <= 1e-15 * loss.abs() {
                params = trial;
                loss = l;
                grad = g;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(ClassProbModel { k, map, params })
}

impl ClassProbModel {
    pub fn n_classes(&self) -> usize {
        self.k
    }

    pub fn input_dim(&self) -> usize {
        self.map.input_dim()
    }

    /// Class probabilities before clipping, index `c` for label `c + 1`.
    pub fn predict_raw_row(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        softmax_into(&self.map, &self.params, &self.map.transform_row(row), self.k, &mut out);
        out
    }

    /// Probabilities mixed toward uniform so each lies in `[ε, 1-(k-1)ε]`.
    pub fn predict_row(&self, row: &[f64]) -> Vec<f64> {
        let kf = self.k as f64;
        self.predict_raw_row(row).into_iter().map(|v| (1.0 - kf * PROB_CLIP) * v + PROB_CLIP).collect()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<Vec<f64>>> {
        self.map.check(x)?;
        Ok(x.rows_iter().map(|r| self.predict_row(r)).collect())
    }

    /// Raw-scale `(intercept, slopes)` of class `label` against class 1.
    pub fn raw_coefficients(&self, label: usize) -> (f64, Vec<f64>) {
        let p = self.map.dim();
        self.map.unstandardize(&self.params[(label - 2) * p..(label - 1) * p])
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.map
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::fit_logistic;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn two_classes_match_logistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<[f64; 2]> = (0..500).map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)]).collect();
        let labels: Vec<u32> = rows
            .iter()
            .map(|r| if rng.random::<f64>() < 1.0 / (1.0 + (-0.5 - r[0] + r[1]).exp()) { 2 } else { 1 })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let lambda = 0.3;
        let mn = fit_multinomial(&x, &labels, 2, lambda, Basis::Quadratic).unwrap();
        let bin: Vec<bool> = labels.iter().map(|&l| l == 2).collect();
        let lg = fit_logistic(&x, &bin, None, lambda, Basis::Quadratic).unwrap();
        for r in x.rows_iter() {
            let diff = (mn.predict_raw_row(r)[1] - lg.predict_raw_row(r)).abs();
            assert!(diff < 1e-6, "{diff}");
        }
    }

    #[test]
    fn independent_labels_give_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 20_000;
        let rows: Vec<[f64; 1]> = (0..n).map(|_| [rng.sample(StandardNormal)]).collect();
        let labels: Vec<u32> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                if u < 0.2 {
                    1
                } else if u < 0.7 {
                    2
                } else {
                    3
                }
            })
            .collect();
        let freq: Vec<f64> = (1..=3).map(|c| labels.iter().filter(|&&l| l == c).count() as f64 / n as f64).collect();
        let m = fit_multinomial(&Matrix::from_rows(&rows).unwrap(), &labels, 3, 1e-3, Basis::Linear).unwrap();
        for x in [-1.0, 0.0, 1.5] {
            let pr = m.predict_row(&[x]);
            assert!((pr.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for c in 0..3 {
                assert!((pr[c] - freq[c]).abs() < 1e-2);
            }
        }
    }

    #[test]
    fn missing_class_rejected() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        assert_eq!(fit_multinomial(&x, &[1, 3, 1], 3, 1.0, Basis::Linear), Err(Error::MissingClass(2)));
        assert_eq!(
            fit_multinomial(&x, &[1, 4, 2], 3, 1.0, Basis::Linear),
            Err(Error::LabelOutOfRange { label: 4, k: 3 })
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<[f64; 2]> = (0..60).map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let map = FeatureMap::fit(&x, Basis::Linear).unwrap();
        let design = map.transform(&x).unwrap();
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let params: Vec<f64> = (0..6).map(|_| rng.random::<f64>() - 0.5).collect();
        let (_, g) = multinomial_objective(&design, &labels, 3, 0.1, &params);
        for j in 0..params.len() {
            let h = 1e-6;
            let mut up = params.clone();
            up[j] += h;
            let mut dn = params.clone();
            dn[j] -= h;
            let fd = (multinomial_objective(&design, &labels, 3, 0.1, &up).0
                - multinomial_objective(&design, &labels, 3, 0.1, &dn).0)
                / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-4 * g[j].abs().max(1e-3), "{j}: {fd} vs {}", g[j]);
        }
    }
}
