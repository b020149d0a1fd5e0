use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_slowfast");

fn slowfast(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("SLOWFAST_OUT_DIR").output().unwrap()
}

fn in_dir(cmd: &str, dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    slowfast(&args)
}

fn summary(dir: &Path) -> BTreeMap<String, String> {
    fs::read_to_string(dir.join("summary.txt"))
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn manifest(dir: &Path) -> Vec<(String, String)> {
    fs::read_to_string(dir.join("manifest.txt"))
        .unwrap()
        .lines()
        .map(|l| {
            let (f, c) = l.split_once(": ").unwrap();
            (f.to_string(), c.to_string())
        })
        .collect()
}

fn check_csv_schemas(dir: &Path) {
    for (file, cols) in manifest(dir) {
        if !file.ends_with(".csv") {
            continue;
        }
        let text = fs::read_to_string(dir.join(&file)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), cols, "{file} header");
        let width = cols.split(',').count();
        for (i, row) in lines.enumerate() {
            let fields: Vec<&str> = row.split(',').collect();
            assert_eq!(fields.len(), width, "{file} row {i}");
            for f in fields {
                assert!(f.parse::<f64>().is_ok_and(f64::is_finite), "{file} row {i}: `{f}`");
            }
        }
    }
}

#[test]
fn check_reports_the_gap_condition() {
    let dir = tempfile::tempdir().unwrap();
    let out = in_dir("check", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let s = summary(dir.path());
    assert_eq!(s["pass"], "true");
    assert_eq!(s["hypothesis.gap_ok"], "true");
    let mu: f64 = s["hypothesis.mu"].parse().unwrap();
    assert!((mu - 0.27543).abs() < 1e-4);
    let log = fs::read_to_string(dir.path().join("run.log")).unwrap();
    assert!(log.contains("hypothesis report:") && log.contains("gap_ok = true"));
    check_csv_schemas(dir.path());
}

#[test]
fn manifold_grid_has_thirteen_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = in_dir("manifold", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("manifold.csv")).unwrap();
    assert_eq!(text.lines().count(), 14);
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("v0_1,h_1,") && header.ends_with("profile_100"));
    check_csv_schemas(dir.path());
}

#[test]
fn simulate_and_tracking_outputs_follow_their_schemas() {
    for cmd in ["simulate", "tracking"] {
        let dir = tempfile::tempdir().unwrap();
        let out = in_dir(cmd, dir.path(), &["--set", "model.eps=0.05"]);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        check_csv_schemas(dir.path());
    }
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for bad in [
        vec!["--set", "model.epsilon=0.1"],
        vec!["--set", "model.eps=-0.1"],
        vec!["--set", "model.alpha=2.5"],
        vec!["--set", "numerics.t_end=1.0005"],
        vec!["--set", "novalue"],
        vec!["--config", "/nonexistent/run.toml"],
    ] {
        let out = in_dir("check", dir.path(), &bad);
        assert_eq!(out.status.code(), Some(2), "{bad:?}");
        assert!(!out.stderr.is_empty());
    }
    let out = in_dir("simulate", dir.path(), &["--set", "numerics.t_end=1.0005"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("t_end") || err.contains("1.0005"), "{err}");
}

#[test]
fn resolved_config_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = in_dir("simulate", a.path(), &["--seed", "9", "--set", "numerics.t_end=0.5", "--set", "model.n_modes=8"]);
    assert_eq!(out.status.code(), Some(0));
    let cfg = a.path().join("resolved_config.toml");
    let out = in_dir("simulate", b.path(), &["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for f in ["summary.txt", "trajectory.csv", "reduced.csv", "run.log"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let s = summary(a.path());
    assert_eq!(s["config.numerics.seed"], "9");
    assert_eq!(s["config.model.n_modes"], "8");
}

#[test]
fn seed_changes_the_noise() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    in_dir("simulate", a.path(), &["--seed", "1", "--set", "numerics.t_end=0.2"]);
    in_dir("simulate", b.path(), &["--seed", "2", "--set", "numerics.t_end=0.2"]);
    assert_ne!(
        fs::read(a.path().join("trajectory.csv")).unwrap(),
        fs::read(b.path().join("trajectory.csv")).unwrap()
    );
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from_env");
    let out = Command::new(BIN)
        .arg("check")
        .env("SLOWFAST_OUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(target.join("summary.txt").exists());
}

#[test]
fn config_file_sections_are_read() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[model]\nname = \"custom\"\nalpha = 1.5\neps = 0.02\nj = [[-2.0]]\ngamma2 = 2.0\n\n[experiment]\nv0 = [0.5]\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = slowfast(&["check", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out_dir);
    assert_eq!(s["hypothesis.gamma2"], "2");
    assert_eq!(s["config.model.name"], "\"custom\"");
    fs::write(&cfg, "[model]\nname = \"example2\"\ngamma2 = 2.0\n").unwrap();
    let out = slowfast(&["check", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimate_writes_the_objective_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = in_dir(
        "estimate",
        dir.path(),
        &["--set", "numerics.n_mc=4", "--set", "numerics.t_end=1.0", "--set", "experiment.grid_n=7"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path());
    let d: f64 = s["d_hat"].parse().unwrap();
    assert!((0.2..=2.0).contains(&d));
    assert!(s.contains_key("bound.numerator"));
    check_csv_schemas(dir.path());
}
