use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Accumulates `Σ w x xᵀ` and `Σ w x t` for row vectors of a fixed length.
pub(crate) struct NormalEquations {
    p: usize,
    gram: Vec<f64>,
    rhs: Vec<f64>,
}

impl NormalEquations {
    pub fn new(p: usize) -> Self {
        NormalEquations { p, gram: vec![0.0; p * p], rhs: vec![0.0; p] }
    }

    pub fn add(&mut self, x: &[f64], w: f64, t: f64) {
        let p = self.p;
        for j in 0..p {
            let wx = w * x[j];
            if wx == 0.0 {
                continue;
            }
            self.rhs[j] += wx * t;
            let row = &mut self.gram[j * p..];
            // lower triangle only; mirrored in `solve`
            for k in 0..=j {
                row[k] += wx * x[k];
            }
        }
    }

    pub fn add_rhs(&mut self, j: usize, v: f64) {
        self.rhs[j] += v;
    }

    /// Adds `ridge` to every diagonal entry except the intercept (index 0).
    pub fn add_ridge(&mut self, ridge: f64) {
        for j in 1..self.p {
            self.gram[j * self.p + j] += ridge;
        }
    }

    fn matrix(&self) -> DMatrix<f64> {
        let p = self.p;
        DMatrix::from_fn(p, p, |i, j| if j <= i { self.gram[i * p + j] } else { self.gram[j * p + i] })
    }

    /// Smallest over largest eigenvalue of the accumulated Gram matrix.
    pub fn conditioning(&self) -> f64 {
        let eig = SymmetricEigen::new(self.matrix());
        let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if max <= 0.0 {
            0.0
        } else {
            min / max
        }
    }

    pub fn solve(&self) -> Result<Vec<f64>> {
        solve_spd(self.matrix(), DVector::from_column_slice(&self.rhs))
    }
}

/// Solves a symmetric positive (semi)definite system, falling back to LU and
/// finally to a tiny diagonal jitter.
pub(crate) fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<Vec<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(&b);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x.iter().copied().collect());
        }
    }
    if let Some(x) = a.clone().lu().solve(&b) {
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x.iter().copied().collect());
        }
    }
    let scale = a.diagonal().iter().cloned().fold(0.0, f64::max).max(1.0);
    let n = a.nrows();
    let jittered = a + DMatrix::identity(n, n) * (1e-10 * scale);
    jittered.cholesky().map(|ch| ch.solve(&b).iter().copied().collect()).ok_or(Error::SingularDesign)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
