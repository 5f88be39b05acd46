use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &["--gram-nodes", "2048", "--interior-nodes", "2048", "--boundary-nodes", "256", "--grid", "11"];

fn hgfd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgfd")).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn run_in(dir: &Path, sub: &str, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec![sub, "--out", out];
    args.extend_from_slice(extra);
    hgfd(&args)
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn heat_writes_curve_solution_and_meta() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("heat");
    let mut args = vec!["--law", "shifted_poisson:20", "--iterations", "40"];
    args.extend_from_slice(SMALL);
    let out = run_in(&dir, "heat", &args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let curve = read(&dir, "curve.csv");
    assert!(curve.starts_with("n,risk,l2_error_to_exact,k_sampled,grad_norm\n"));
    assert!(curve.ends_with('\n'));
    assert_eq!(curve.lines().count(), 41);
    let err = column(&curve, "l2_error_to_exact");
    assert!(err.last().unwrap() < &err[0]);

    let solution = read(&dir, "solution.csv");
    assert!(solution.starts_with("t,x,u\n"));
    assert_eq!(solution.lines().count(), 1 + 11 * 11);

    let meta = read(&dir, "meta.txt");
    for line in ["experiment=heat", "law=shifted_poisson:20", "iterations=40", "step=0.6", "c=2", "# runtime_seconds="] {
        assert!(meta.contains(line), "{line} missing from meta");
    }
}

#[test]
fn identical_seeds_give_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["--law", "shifted_poisson:20", "--iterations", "15", "--seed", "5"];
    args.extend_from_slice(SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run_in(&a, "heat", &args).status.success());
    assert!(run_in(&b, "heat", &args).status.success());
    assert_eq!(read(&a, "curve.csv"), read(&b, "curve.csv"));
    assert_eq!(read(&a, "solution.csv"), read(&b, "solution.csv"));
}

#[test]
fn meta_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let mut args = vec!["--law", "geometric:0.8", "--iterations", "10", "--seed", "3"];
    args.extend_from_slice(SMALL);
    assert!(run_in(&first, "heat", &args).status.success());
    let second = tmp.path().join("second");
    let config = first.join("meta.txt");
    let out = run_in(&second, "heat", &["--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&first, "curve.csv"), read(&second, "curve.csv"));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.cfg");
    fs::write(
        &config,
        "# small run\niterations = 50\nlaw = shifted_poisson:20\ngram-nodes = 2048\ninterior_nodes = 2048\nboundary-nodes = 256\ngrid = 5\n",
    )
    .unwrap();
    let dir = tmp.path().join("out");
    let out = run_in(&dir, "heat", &["--config", config.to_str().unwrap(), "--iterations", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&dir, "curve.csv").lines().count(), 8);
    assert!(read(&dir, "meta.txt").contains("grid=5\n"));
}

#[test]
fn divergence_keeps_the_truncated_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("div");
    let mut args = vec!["--law", "shifted_poisson:20", "--iterations", "60", "--step", "1000"];
    args.extend_from_slice(SMALL);
    let out = run_in(&dir, "heat", &args);
    assert_eq!(out.status.code(), Some(2));
    let curve = read(&dir, "curve.csv");
    let rows = curve.lines().count() - 1;
    assert!((1..60).contains(&rows));
    assert!(read(&dir, "meta.txt").contains("# termination=diverged"));
    assert!(!dir.join("solution.csv").exists());
}

#[test]
fn hjb_writes_bounded_controls() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("hjb");
    let mut args = vec!["--iterations", "20", "--cadence", "5"];
    args.extend_from_slice(SMALL);
    let out = run_in(&dir, "hjb", &args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let curve = read(&dir, "curve.csv");
    assert!(curve.starts_with("n,risk,terminal_error,k_sampled\n"));
    assert_eq!(column(&curve, "n"), vec![1.0, 5.0, 10.0, 15.0, 20.0]);
    let risk0 = column(&curve, "risk")[0];
    assert!((risk0 - 291.6).abs() < 0.01 * 291.6, "{risk0}");

    let control = read(&dir, "control.csv");
    assert!(control.starts_with("t,x,c_star\n"));
    assert_eq!(control.lines().count(), 1 + 11 * 11);
    assert!(column(&control, "c_star").iter().all(|c| c.abs() <= 0.5));
    let x = column(&control, "x");
    assert_eq!((x[0], x[10]), (-3.0, 3.0));
    assert_eq!(read(&dir, "solution.csv").lines().count(), 1 + 11 * 11);
}

const QUICK_VERIFY: &[&str] = &["--replications", "20000", "--fourth-moment-samples", "200000", "--rate", "false"];

#[test]
fn verify_passes_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(run_in(&a, "verify", QUICK_VERIFY).status.code(), Some(0));
    assert_eq!(run_in(&b, "verify", QUICK_VERIFY).status.code(), Some(0));
    let checks = read(&a, "checks.csv");
    assert!(checks.starts_with("check,statistic,threshold,pass\n"));
    assert!(checks.lines().skip(1).all(|l| l.ends_with(",true")));
    assert_eq!(checks, read(&b, "checks.csv"));
}

#[test]
fn unit_lambda_fails_the_variance_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("unit");
    let mut args = QUICK_VERIFY.to_vec();
    args.extend_from_slice(&["--lambda", "unit"]);
    assert_eq!(run_in(&dir, "verify", &args).status.code(), Some(3));
    let checks = read(&dir, "checks.csv");
    let bound_rows: Vec<&str> = checks.lines().filter(|l| l.starts_with("variance_bound_")).collect();
    assert_eq!(bound_rows.len(), 3);
    assert!(bound_rows.iter().all(|l| l.ends_with(",false")));
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("x");
    assert_eq!(hgfd(&["heat", "--step", "abc"]).status.code(), Some(1));
    assert_eq!(hgfd(&["nonsense"]).status.code(), Some(1));
    assert_eq!(run_in(&dir, "heat", &["--lambda", "sideways"]).status.code(), Some(1));
    assert_eq!(run_in(&dir, "heat", &["--law", "deterministic:4"]).status.code(), Some(1));
    assert_eq!(run_in(&dir, "hjb", &["--config", "/nonexistent/run.cfg"]).status.code(), Some(1));
    let bad = tmp.path().join("bad.cfg");
    fs::write(&bad, "replications=100000\n").unwrap();
    assert_eq!(run_in(&dir, "heat", &["--config", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(hgfd(&["--help"]).status.code(), Some(0));
}
