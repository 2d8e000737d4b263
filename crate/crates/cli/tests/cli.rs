use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn thinobs(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thinobs"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn run_dir(o: &Output) -> PathBuf {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(String::from_utf8(o.stdout.clone()).unwrap().trim())
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn listed(m: &Value) -> BTreeSet<String> {
    m["artifacts"].as_array().unwrap().iter().map(|a| a["file"].as_str().unwrap().to_string()).collect()
}

fn on_disk(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn solve_writes_field_and_history() {
    let tmp = TempDir::new().unwrap();
    let dir = run_dir(&thinobs(tmp.path(), &["solve", "--a", "-0.5", "--n", "2", "--resolution", "128", "--boundary", "x1"]));
    assert!(dir.file_name().unwrap().to_str().unwrap().starts_with("solve-"));
    let m = manifest(&dir);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["config"]["a"], -0.5);
    assert_eq!(m["config"]["resolution"], 128);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(listed(&m), on_disk(&dir));
    for f in ["field.json", "history.csv", "energy.csv", "free_boundary.json"] {
        assert!(listed(&m).contains(f), "{f}");
    }
    let field: Value = serde_json::from_str(&fs::read_to_string(dir.join("field.json")).unwrap()).unwrap();
    assert_eq!(field["values"].as_array().unwrap().len(), field["nodes"].as_array().unwrap().len());
    assert!(!csv_rows(&dir.join("history.csv")).is_empty());
}

#[test]
fn identical_settings_give_identical_bytes() {
    let tmp = TempDir::new().unwrap();
    let args = ["--seed", "11", "analyze", "--a", "-0.4", "--resolution", "32", "--boundary", "random", "--tests", "5"];
    let first = run_dir(&thinobs(tmp.path(), &args));
    let second = run_dir(&thinobs(tmp.path(), &args));
    assert_ne!(first, second);
    let files = on_disk(&first);
    assert_eq!(files, on_disk(&second));
    for f in files.iter().chain(std::iter::once(&"manifest.json".to_string())) {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
    // a different seed changes the random boundary data
    let other = run_dir(&thinobs(tmp.path(), &["--seed", "12", "analyze", "--a", "-0.4", "--resolution", "32", "--boundary", "random", "--tests", "5"]));
    assert_ne!(fs::read(first.join("field.json")).unwrap(), fs::read(other.join("field.json")).unwrap());
}

#[test]
fn analyze_lists_every_artifact() {
    let tmp = TempDir::new().unwrap();
    let dir = run_dir(&thinobs(tmp.path(), &["analyze", "--a", "-0.5", "--resolution", "64", "--boundary", "x1+0.2"]));
    let m = manifest(&dir);
    assert_eq!(listed(&m), on_disk(&dir));
    let s: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert!(s["weiss_max_decrease"].as_f64().unwrap() <= 1e-3 * s["weiss_range"].as_f64().unwrap());
    assert!(s["first_variation_max_relative"].as_f64().unwrap() < 1e-6);
    assert!(s["nonseparation_distance"].as_f64().unwrap() <= 2.0 / 64.0);
}

#[test]
fn beta_grid_margins_are_positive() {
    let tmp = TempDir::new().unwrap();
    let dir = run_dir(&thinobs(tmp.path(), &["beta", "--a-grid", "-0.99:-0.01:0.01"]));
    let rows = csv_rows(&dir.join("margins.csv"));
    assert_eq!(rows.len(), 99);
    for r in &rows {
        assert!(r[1].parse::<f64>().unwrap() > 0.0, "{r:?}");
    }
    let half = rows.iter().find(|r| r[0] == "-0.5").unwrap();
    assert!((half[1].parse::<f64>().unwrap() - 2.0 / 3.0).abs() < 1e-9);
    assert_eq!(listed(&manifest(&dir)), on_disk(&dir));
}

#[test]
fn u2_certificate_is_unstable() {
    let tmp = TempDir::new().unwrap();
    let dir = run_dir(&thinobs(tmp.path(), &["stability", "--target", "u2", "--a", "-0.5"]));
    let cert: Value = serde_json::from_str(&fs::read_to_string(dir.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["verdict"], "unstable");
    assert!((cert["certificate"]["factor"].as_f64().unwrap() + 2.0 / 3.0).abs() < 1e-9);

    let dir = run_dir(&thinobs(tmp.path(), &["stability", "--a-grid", "-0.75:-0.25:0.25"]));
    let all: Value = serde_json::from_str(&fs::read_to_string(dir.join("certificates.json")).unwrap()).unwrap();
    assert_eq!(all.as_array().unwrap().len(), 3);
    assert_eq!(csv_rows(&dir.join("summary.csv")).len(), 3);
}

#[test]
fn reference_curves() {
    let tmp = TempDir::new().unwrap();
    let dir = run_dir(&thinobs(tmp.path(), &["reference", "--target", "u2", "--a", "-0.25"]));
    assert_eq!(listed(&manifest(&dir)), on_disk(&dir));
    let s: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert!((s["log_log_slope"].as_f64().unwrap() - 1.25).abs() < 1e-6);
    assert!((s["gradient_slope"].as_f64().unwrap() - 0.25).abs() < 0.005);
    for t in ["line-dipole", "test-function"] {
        let dir = run_dir(&thinobs(tmp.path(), &["reference", "--target", t, "--samples", "8"]));
        assert_eq!(csv_rows(&dir.join("curve.csv")).len(), 8);
    }
}

#[test]
fn report_passes() {
    let tmp = TempDir::new().unwrap();
    let dir = run_dir(&thinobs(tmp.path(), &["--tag", "smoke", "report"]));
    assert!(dir.file_name().unwrap().to_str().unwrap().ends_with("-smoke"));
    assert!(csv_rows(&dir.join("report.csv")).iter().all(|r| r[3] == "true"));
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# beta sweep\na_grid = -0.5:-0.1:0.1\nseed = 4\n").unwrap();
    let dir = run_dir(&thinobs(tmp.path(), &["--config", cfg.to_str().unwrap(), "beta"]));
    assert_eq!(csv_rows(&dir.join("margins.csv")).len(), 5);
    assert_eq!(manifest(&dir)["config"]["seed"], 4);
    let dir = run_dir(&thinobs(tmp.path(), &["--config", cfg.to_str().unwrap(), "beta", "--a-grid", "-0.5:-0.4:0.1"]));
    assert_eq!(csv_rows(&dir.join("margins.csv")).len(), 2);
    assert_eq!(manifest(&dir)["config"]["a-grid"], "-0.5:-0.4:0.1");
}

#[test]
fn bad_input_exits_with_one_and_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("runs");
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "resolution 32\n").unwrap();
    let unknown = tmp.path().join("unknown.cfg");
    fs::write(&unknown, "colour = blue\n").unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["--config", cfg.to_str().unwrap(), "solve"],
        vec!["--config", unknown.to_str().unwrap(), "solve"],
        vec!["solve", "--boundary", "x1 +"],
        vec!["solve", "--n", "4"],
        vec!["beta", "--a-grid", "0.1:0.5:0.1"],
    ] {
        let o = thinobs(&out, &args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn non_convergence_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let o = thinobs(tmp.path(), &["solve", "--resolution", "64", "--boundary", "x1+0.2", "--max-outer", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = fs::read_dir(tmp.path()).unwrap().next().unwrap().unwrap().path();
    let m = manifest(&dir);
    assert_eq!(m["status"], "failed");
    assert_eq!(m["exit_code"], 2);
    assert_eq!(listed(&m), on_disk(&dir));
}
