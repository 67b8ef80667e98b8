use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kappalab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kappalab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("KAPPALAB_JOBS")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_body(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

#[test]
fn delta_on_a_product_state_brackets_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kappalab(&["delta", "--set", "state.family=product:7", "--set", "state.n=3"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&tmp.path().join("delta.json"));
    let r = &summary["results"];
    assert_eq!(r["lower"].as_f64().unwrap(), 0.0);
    assert!(r["upper"].as_f64().unwrap() < 1e-9);
    assert_eq!(r["certificate_check"]["passes"], Value::Bool(true));
    assert_eq!(summary["config"]["state.family"], "product:7");
    assert_eq!(summary["status"], "ok");
    assert!(summary["wall_time_s"].is_number());
    assert_eq!(summary["version"], env!("CARGO_PKG_VERSION"));

    let csv = fs::read_to_string(tmp.path().join("delta_bipartitions.csv")).unwrap();
    assert!(csv.contains("# state.n = 3\n"));
    assert!(csv.contains("bipartition,lower,upper,ppt_value,iterations,flagged\n"));
    assert_eq!(csv_body(&tmp.path().join("delta_bipartitions.csv")).lines().count(), 4);
}

#[test]
fn kappa_w_reports_the_reference_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("w.toml");
    fs::write(&cfg, "experiment = \"kappa-w\"\n\n[sweep]\nn = [8]\n").unwrap();
    let out = kappalab(&["kappa-w", "--config", cfg.to_str().unwrap()], &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&tmp.path().join("out/kappa-w.json"));
    let line = summary["results"]["comparison"][0].as_str().unwrap();
    assert!(line.contains("2^(n-4) = 16"), "{line}");
    assert!(line.contains("half trace norm"), "{line}");
    let est = &summary["results"]["estimates"][0];
    let (lo, hi) = (est["lower"].as_f64().unwrap(), est["upper"].as_f64().unwrap());
    assert!(lo <= hi + 1e-6);
    assert!(lo > 16.0);
}

#[test]
fn identical_runs_give_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "kappa",
        "--set",
        "state.family=product:3",
        "--set",
        "state.n=3",
        "--set",
        "seed=11",
    ];
    let a = kappalab(&args, &tmp.path().join("a"));
    let b = kappalab(&args, &tmp.path().join("b"));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    for name in ["kappa_per_size.csv", "kappa_subsets.csv"] {
        assert_eq!(csv_body(&tmp.path().join("a").join(name)), csv_body(&tmp.path().join("b").join(name)), "{name}");
    }
}

#[test]
fn invalid_config_exits_2_with_an_error_record() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kappalab(
        &["delta", "--set", "state.n=20", "--set", "noise.depolarizing_2q=-0.5", "--set", "solver.tolerance=1"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let record = read_json(&tmp.path().join("error.json"));
    assert_eq!(record["error"], "validation");
    let diags = record["diagnostics"].as_array().unwrap();
    let has = |path: &str, kind: &str| diags.iter().any(|d| d["path"] == path && d["kind"] == kind);
    assert!(has("state.n", "cap"));
    assert!(has("noise.depolarizing_2q", "range"));
    assert!(has("solver.tolerance", "unknown_key"));
    assert!(!tmp.path().join("delta.json").exists());
}

#[test]
fn validate_only_accepts_a_good_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kappalab(&["ldp", "--validate-only", "--set", "noise.levels=[0.0, 0.2]"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(!tmp.path().join("ldp.json").exists());
}

#[test]
fn unreadable_config_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kappalab(&["kappa", "--config", "/nonexistent/cfg.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(read_json(&tmp.path().join("error.json"))["error"], "io");
}

#[test]
fn fidelity_sweep_writes_the_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kappalab(
        &["fidelity-sweep", "--jobs", "1", "--set", "noise.depolarizing_2q=0.01", "--set", "sweep.n=[2,3,4,5,6]"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let r = &read_json(&tmp.path().join("fidelity-sweep.json"))["results"];
    assert_eq!(r["strictly_decreasing"], Value::Bool(true));
    assert!(r["log_fidelity_slope"].as_f64().unwrap() < 0.0);
}
