use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_surrconf"));
    c.env_remove("SURRCONF_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn surrconf")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.join(name);
    let mut args = vec!["simulate", "--out", p(&out)];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

#[test]
fn help_lists_flags_with_defaults() {
    let expected: [(&str, &[&str]); 3] = [
        (
            "simulate",
            &[
                "--dgp",
                "--n",
                "--sigma-s",
                "--seed",
                "--setting",
                "--out",
                "--truth",
                "--config",
                "[default: 3000]",
                "[default: 10]",
            ],
        ),
        (
            "analyze",
            &[
                "--data",
                "--truth",
                "--method",
                "--alpha",
                "--setting",
                "--outcome",
                "--seed",
                "--train-fraction",
                "--repeats",
                "--out",
                "--summary",
                "--basis",
                "--ridge",
                "--cdf-ridge",
                "--config",
                "[default: 0.05]",
                "[default: 0.75]",
                "[default: 1]",
                "[default: linear]",
            ],
        ),
        (
            "experiment",
            &[
                "--dgp",
                "--n",
                "--sigma-s",
                "--reps",
                "--seed",
                "--method",
                "--alpha",
                "--setting",
                "--train-fraction",
                "--parallelism",
                "--out-dir",
                "--basis",
                "--config",
                "[default: 200]",
                "[default: S2]",
                "[default: .]",
            ],
        ),
    ];
    for (cmd, needles) in expected {
        let o = run(&[cmd, "--help"]);
        assert_eq!(code(&o), 0);
        let text = String::from_utf8_lossy(&o.stdout);
        for n in needles {
            assert!(text.contains(n), "`{cmd} --help` lacks {n}:\n{text}");
        }
    }
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn simulate_writes_data_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), "d.csv", &["--dgp", "continuous", "--n", "3000", "--sigma-s", "10", "--seed", "1"]);
    let rows = |f: &Path| std::fs::read_to_string(f).unwrap().lines().count() - 1;
    assert_eq!(rows(&out), 3000);
    assert_eq!(rows(&dir.path().join("d_truth.csv")), 3000);
}

#[test]
fn non_positive_noise_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--sigma-s", "0", "--out", p(&dir.path().join("x.csv"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("sigma_s"), "{}", stderr(&o));
    assert_eq!(code(&run(&["simulate", "--n", "abc", "--out", "x.csv"])), 2);
    assert_eq!(code(&run(&["simulate"])), 2);
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let flags = ["--dgp", "grouped", "--n", "800", "--seed", "9"];
    let a = simulate(dir.path(), "a.csv", &flags);
    let b = simulate(dir.path(), "b.csv", &flags);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a_truth.csv")).unwrap(),
        std::fs::read(dir.path().join("b_truth.csv")).unwrap()
    );
}

#[test]
fn analyze_writes_one_block_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", &["--n", "1500", "--seed", "4"]);
    let (res, truth) = (dir.path().join("r.csv"), dir.path().join("d_truth.csv"));
    let args = [
        "analyze",
        "--data",
        p(&data),
        "--truth",
        p(&truth),
        "--method",
        "science,nosurr,wcqr",
        "--alpha",
        "0.1",
        "--out",
        p(&res),
    ];
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&res).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "unit_id,d,a,group,theta_truth,lower,upper,covered,method");
    let mut blocks: Vec<&str> = Vec::new();
    for l in lines {
        let m = l.rsplit(',').next().unwrap();
        if blocks.last() != Some(&m) {
            blocks.push(m);
        }
    }
    assert_eq!(blocks, ["science", "nosurr", "wcqr"]);
    // same flags, same bytes
    let again = dir.path().join("r2.csv");
    let mut args2 = args.to_vec();
    *args2.last_mut().unwrap() = p(&again);
    assert_eq!(code(&run(&args2)), 0);
    assert_eq!(std::fs::read(&res).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn analyze_reports_missingness_violations_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", &["--n", "500"]);
    let text = std::fs::read_to_string(&data).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let (yi, di) = (header.iter().position(|h| *h == "y").unwrap(), header.iter().position(|h| *h == "d").unwrap());
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = lines.iter().position(|l| l.split(',').nth(di) == Some("0")).unwrap();
    let mut cells: Vec<String> = lines[row].split(',').map(String::from).collect();
    cells[yi] = "1.5".into();
    lines[row] = cells.join(",");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let o = run(&["analyze", "--data", p(&bad), "--out", p(&dir.path().join("r.csv"))]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains(&format!("line {}", row + 1)) && err.contains("(y)"), "{err}");
}

#[test]
fn analyze_rejects_incompatible_methods_and_bad_truth() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", &["--n", "500", "--setting", "S1"]);
    let out = dir.path().join("r.csv");
    assert_eq!(code(&run(&["analyze", "--data", p(&data), "--method", "science", "--out", p(&out)])), 2);
    simulate(dir.path(), "e.csv", &["--n", "600"]);
    let o = run(&["analyze", "--data", p(&data), "--truth", p(&dir.path().join("e_truth.csv")), "--out", p(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn analyze_averages_repeated_splits() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", &["--dgp", "grouped", "--n", "1200"]);
    let out = dir.path().join("r.csv");
    let o = run(&["analyze", "--data", p(&data), "--repeats", "5", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = std::fs::read_to_string(dir.path().join("r_summary.csv")).unwrap();
    assert!(summary.starts_with("method,stratum,metric,value,se\n"));
    assert!(summary.contains("science,D=1,observed_coverage,"));
    assert!(summary.contains("nosurr,D=0,width,"));
}

#[test]
fn experiment_smoke_run_is_fast_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let o = run(&["experiment", "--dgp", "grouped", "--reps", "2", "--n", "500", "--out-dir", p(dir.path())]);
    let took = start.elapsed();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(took < Duration::from_secs(30), "{took:?}");
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    for m in ["wcqr", "nosurr", "science"] {
        for s in ["all", "D=0", "D=1", "G=1", "G=2", "G=3"] {
            assert!(report.contains(&format!(",{m},{s},coverage,")), "{m} {s}");
        }
    }
    assert!(dir.path().join("replicates.csv").exists());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(json["reports"].is_array());
}

#[test]
fn config_files_feed_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    std::fs::write(&cfg, "# smoke\ndgp = grouped\nn = 400\nsigma_s = 5\nseed = 3\n").unwrap();
    let a = dir.path().join("a.csv");
    assert_eq!(code(&run(&["simulate", "--config", p(&cfg), "--out", p(&a)])), 0);
    assert_eq!(std::fs::read_to_string(&a).unwrap().lines().count(), 401);
    let b = dir.path().join("b.csv");
    assert_eq!(code(&run(&["simulate", "--config", p(&cfg), "--n", "300", "--out", p(&b)])), 0);
    assert_eq!(std::fs::read_to_string(&b).unwrap().lines().count(), 301);
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path());
    for body in ["reps 2\n", "reps = two\n", "unknown_flag = 1\n", "config = other.cfg\n"] {
        let cfg = dir.path().join("bad.cfg");
        std::fs::write(&cfg, body).unwrap();
        let o = run(&["experiment", "--config", p(&cfg), "--out-dir", out]);
        assert_eq!(code(&o), 2, "{body:?}: {}", stderr(&o));
    }
    assert_eq!(code(&run(&["experiment", "--config", p(&dir.path().join("missing.cfg"))])), 2);
}

#[test]
fn seed_environment_variable_overrides_the_default_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "n = 300\nseed = 1\n").unwrap();
    let env = dir.path().join("env.csv");
    let o =
        bin().env("SURRCONF_SEED", "77").args(["simulate", "--config", p(&cfg), "--out", p(&env)]).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let flag = simulate(dir.path(), "flag.csv", &["--n", "300", "--seed", "77"]);
    let one = simulate(dir.path(), "one.csv", &["--n", "300", "--seed", "1"]);
    assert_eq!(std::fs::read(&env).unwrap(), std::fs::read(&flag).unwrap());
    assert_ne!(std::fs::read(&env).unwrap(), std::fs::read(&one).unwrap());
    // an explicit flag beats the environment
    let both = dir.path().join("both.csv");
    let o = bin()
        .env("SURRCONF_SEED", "77")
        .args(["simulate", "--n", "300", "--seed", "1", "--out", p(&both)])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(&both).unwrap(), std::fs::read(&one).unwrap());
}
