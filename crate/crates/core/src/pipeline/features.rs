use crate::data::{Dataset, Matrix, Observation};
use crate::error::{Error, Result};

/// Builds learner inputs from observations: covariates plus one-hot group
/// dummies (first level dropped), optionally followed by the treatment
/// indicator and the surrogates.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBuilder {
    groups: Vec<u32>,
}

impl FeatureBuilder {
    pub fn new(ds: &Dataset) -> Self {
        let mut groups: Vec<u32> = ds.observations().iter().filter_map(|o| o.group).collect();
        groups.sort_unstable();
        groups.dedup();
        FeatureBuilder { groups }
    }

    fn push_base(&self, o: &Observation, out: &mut Vec<f64>) {
        out.extend_from_slice(&o.x);
        for &g in self.groups.iter().skip(1) {
            out.push(if o.group == Some(g) { 1.0 } else { 0.0 });
        }
    }

    fn push_surrogate(o: &Observation, id: usize, out: &mut Vec<f64>) -> Result<()> {
        let s = o.s.as_ref().ok_or(Error::SettingMismatch(id))?;
        out.extend_from_slice(s);
        Ok(())
    }

    /// `(X, group)`.
    pub fn base(&self, o: &Observation) -> Vec<f64> {
        let mut v = Vec::new();
        self.push_base(o, &mut v);
        v
    }

    /// `(X, group, S)`.
    pub fn with_surrogate(&self, o: &Observation, id: usize) -> Result<Vec<f64>> {
        let mut v = self.base(o);
        Self::push_surrogate(o, id, &mut v)?;
        Ok(v)
    }

    /// `(X, group, a)`.
    pub fn with_arm(&self, o: &Observation, a: u8) -> Vec<f64> {
        let mut v = self.base(o);
        v.push(a as f64);
        v
    }

    /// `(X, group, A, S)`.
    pub fn with_arm_surrogate(&self, o: &Observation, id: usize) -> Result<Vec<f64>> {
        let mut v = self.with_arm(o, o.a);
        Self::push_surrogate(o, id, &mut v)?;
        Ok(v)
    }
}

/// Stacks per-row feature vectors.
pub(crate) fn stack(rows: Vec<Vec<f64>>) -> Result<Matrix> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    Matrix::from_rows(&rows)
}
