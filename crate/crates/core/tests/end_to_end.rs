use surrconf::eval::{score_coverage, score_sets, Stratum};
use surrconf::io;
use surrconf::learners::LearnerConfig;
use surrconf::pipeline::{run_categorical, run_methods, Method};
use surrconf::simgen::{generate, DgpConfig, DgpKind};
use surrconf::{EstimandSpec, OutcomeKind, Setting};

#[test]
fn csv_round_trip_preserves_the_analysis() {
    let (ds, truth) = generate(&DgpConfig::new(DgpKind::Grouped, 1500, 5.0, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (data, truth_path) = (dir.path().join("d.csv"), dir.path().join("t.csv"));
    io::write_dataset(&data, &ds).unwrap();
    io::write_truth(&truth_path, &truth).unwrap();
    let back = io::read_dataset(&data, None, OutcomeKind::Continuous).unwrap();
    let truth_back = io::read_truth(&truth_path).unwrap();
    assert_eq!(back.setting(), Setting::S2);

    let spec = EstimandSpec::from_total(0.1).unwrap();
    let learner = LearnerConfig::default();
    let a = run_methods(&ds, &spec, Setting::S2, &Method::ALL, 8, &learner).unwrap();
    let b = run_methods(&back, &spec, Setting::S2, &Method::ALL, 8, &learner).unwrap();
    assert_eq!(a.folds, b.folds);
    assert_eq!(a.results, b.results);
    for res in &a.results {
        let scores = score_coverage(res, &truth_back).unwrap();
        assert_eq!(scores[0].stratum, Stratum::All);
        assert_eq!(scores[0].units, a.folds.i2.len());
    }
}

#[test]
fn settings_without_surrogates_run_the_baselines() {
    for setting in [Setting::S1, Setting::S3] {
        let mut cfg = DgpConfig::new(DgpKind::Continuous, 1500, 10.0, 5);
        cfg.setting = setting;
        let (ds, truth) = generate(&cfg).unwrap();
        let spec = EstimandSpec::from_total(0.1).unwrap();
        let an =
            run_methods(&ds, &spec, setting, &[Method::Wcqr, Method::NoSurr], 2, &LearnerConfig::default()).unwrap();
        let nosurr = score_coverage(&an.results[1], &truth).unwrap();
        assert!(nosurr[0].coverage() > 0.8, "{setting}: {:?}", nosurr[0]);
        assert!(run_methods(&ds, &spec, setting, &[Method::Science], 2, &LearnerConfig::default()).is_err());
    }
}

#[test]
fn categorical_sets_cover_most_outcomes() {
    let (ds, truth) = generate(&DgpConfig::new(DgpKind::Categorical, 3000, 10.0, 9)).unwrap();
    let (_, results) = run_categorical(&ds, 0.1, Setting::S2, &Method::ALL, 4, &LearnerConfig::default()).unwrap();
    assert_eq!(results.len(), 3);
    for res in &results {
        let all = score_sets(res, &truth).unwrap()[0];
        assert!(all.coverage() > 0.8, "{}: {all:?}", res.method);
        assert!(all.mean_width().unwrap() <= 5.0);
    }
}
