use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};

/// Basis expansion applied to raw inputs before a GLM fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Basis {
    #[default]
    Linear,
    /// Raw features, squares of non-binary features and all pairwise products.
    Quadratic,
}

impl std::str::FromStr for Basis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "1" => Ok(Basis::Linear),
            "quadratic" | "2" => Ok(Basis::Quadratic),
            other => Err(Error::InvalidParameter(format!("unknown basis {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Term {
    Raw(usize),
    Product(usize, usize),
}

/// Expansion plus standardization, learned once on training inputs.
///
/// The design row always starts with an intercept column equal to one;
/// every other column is centred and scaled to unit variance. Columns that
/// are constant on the training inputs are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    input_dim: usize,
    terms: Vec<Term>,
    center: Vec<f64>,
    scale: Vec<f64>,
}

const CONSTANT_TOL: f64 = 1e-12;

impl FeatureMap {
    pub fn fit(x: &Matrix, basis: Basis) -> Result<Self> {
        let d = x.ncols();
        let n = x.nrows();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let binary: Vec<bool> = (0..d).map(|j| x.rows_iter().all(|r| r[j] == 0.0 || r[j] == 1.0)).collect();
        let mut candidates: Vec<Term> = (0..d).map(Term::Raw).collect();
        if basis == Basis::Quadratic {
            for i in 0..d {
                for j in i..d {
                    if i == j && binary[i] {
                        continue;
                    }
                    candidates.push(Term::Product(i, j));
                }
            }
        }
        let mut terms = Vec::new();
        let mut center = Vec::new();
        let mut scale = Vec::new();
        for t in candidates {
            let (mut s1, mut s2) = (0.0, 0.0);
            for r in x.rows_iter() {
                let v = eval(t, r);
                s1 += v;
                s2 += v * v;
            }
            let mean = s1 / n as f64;
            let var = (s2 / n as f64 - mean * mean).max(0.0);
            let sd = var.sqrt();
            if sd > CONSTANT_TOL * (1.0 + mean.abs()) {
                terms.push(t);
                center.push(mean);
                scale.push(sd);
            }
        }
        Ok(FeatureMap { input_dim: d, terms, center, scale })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Number of design columns including the intercept.
    pub fn dim(&self) -> usize {
        self.terms.len() + 1
    }

    pub fn transform_row_into(&self, row: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        for (k, &t) in self.terms.iter().enumerate() {
            out[k + 1] = (eval(t, row) - self.center[k]) / self.scale[k];
        }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.transform_row_into(row, &mut out);
        out
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = Matrix::zeros(x.nrows(), self.dim());
        for i in 0..x.nrows() {
            self.transform_row_into(x.row(i), out.row_mut(i));
        }
        Ok(out)
    }

    pub fn check(&self, x: &Matrix) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: x.ncols() });
        }
        Ok(())
    }

    /// Maps standardized-design coefficients back to the scale of the expanded
    /// raw terms: returns `(intercept, slopes)` with one slope per kept term.
    pub fn unstandardize(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        let slopes: Vec<f64> = self.scale.iter().zip(&beta[1..]).map(|(s, b)| b / s).collect();
        let shift: f64 = slopes.iter().zip(&self.center).map(|(b, c)| b * c).sum();
        (beta[0] - shift, slopes)
    }

    /// Human-readable names of kept terms, e.g. `x0`, `x0*x1`.
    pub fn term_names(&self) -> Vec<String> {
        self.terms
            .iter()
            .map(|t| match *t {
                Term::Raw(i) => format!("x{i}"),
                Term::Product(i, j) => format!("x{i}*x{j}"),
            })
            .collect()
    }
}

fn eval(t: Term, row: &[f64]) -> f64 {
    match t {
        Term::Raw(i) => row[i],
        Term::Product(i, j) => row[i] * row[j],
    }
}
