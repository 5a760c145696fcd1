//! Shared fixtures for the criterion benches.

use surrconf::data::{split_folds, Dataset, EstimandSpec, FoldAssignment};
use surrconf::learners::LearnerConfig;
use surrconf::pipeline::{fit_nuisances, NuisanceBundle};
use surrconf::simgen::{gen_continuous, SimTruth};
use surrconf::Setting;

/// A simulated dataset with its fitted nuisances, ready for calibration.
pub struct Fixture {
    pub dataset: Dataset,
    pub truth: SimTruth,
    pub spec: EstimandSpec,
    pub folds: FoldAssignment,
    pub bundle: NuisanceBundle,
}

impl Fixture {
    /// Continuous design with surrogates on every unit.
    pub fn continuous(n: usize, seed: u64) -> Fixture {
        let (dataset, truth) = gen_continuous(n, 10.0, seed).expect("valid design");
        let spec = EstimandSpec::from_total(0.05).expect("valid level");
        let folds = split_folds(&dataset, 0.75, seed).expect("valid split");
        let bundle = fit_nuisances(&dataset, &folds, &spec, Setting::S2, &LearnerConfig::default()).expect("fit");
        Fixture { dataset, truth, spec, folds, bundle }
    }
}
