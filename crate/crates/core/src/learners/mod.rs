//! Penalized GLM learners for the nuisance functions.
//!
//! Every learner standardizes its inputs through a [`FeatureMap`] fitted on
//! the training rows, so coefficients are comparable across columns and the
//! ridge penalty never touches the intercept.

mod features;
pub(crate) mod linalg;
mod logistic;
mod mean;
mod multinomial;
mod quantile;

pub use features::{Basis, FeatureMap};
pub(crate) use logistic::sigmoid;
pub use logistic::{fit_logistic, logistic_objective, ProbModel};
pub use mean::{fit_mean, MeanModel};
pub use multinomial::{fit_multinomial, multinomial_objective, ClassProbModel};
pub use quantile::{fit_quantile, pinball, pinball_objective, QuantileModel, QuantilePair};

use crate::data::Matrix;
use crate::error::{Error, Result};

/// Lower and upper bound applied to every probability prediction.
pub const PROB_CLIP: f64 = 1e-3;

pub fn clip_prob(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// A fitted scalar-valued model.
pub trait Predictor {
    fn input_dim(&self) -> usize;

    /// Unchecked single-row prediction; `row.len()` must equal `input_dim`.
    fn predict_row(&self, row: &[f64]) -> f64;

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.ncols() });
        }
        Ok(x.rows_iter().map(|r| self.predict_row(r)).collect())
    }
}

/// Basis and ridge policy shared by all nuisance fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub basis: Basis,
    /// Ridge penalty is `ridge_per_obs * n` for a fit on `n` rows.
    pub ridge_per_obs: f64,
    /// Ridge for the localized CDF models, whose indicator labels are
    /// nearly all ones and separate easily.
    pub cdf_ridge_per_obs: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig { basis: Basis::Linear, ridge_per_obs: 1e-6, cdf_ridge_per_obs: 1e-2 }
    }
}

impl LearnerConfig {
    pub fn ridge(&self, n: usize) -> f64 {
        self.ridge_per_obs * n as f64
    }

    pub fn cdf_ridge(&self, n: usize) -> f64 {
        self.cdf_ridge_per_obs * n as f64
    }
}
