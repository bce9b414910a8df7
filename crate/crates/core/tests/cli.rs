use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn benchmark_config() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.json");
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Benchmark configuration with a light moment budget for quick runs.
fn quick_config() -> Value {
    let mut cfg = benchmark_config();
    cfg["samples"] = json!(5000);
    cfg["steps"] = json!(30);
    cfg
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn ofspc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ofspc")).args(args).output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn validate_benchmark_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "benchmark.json", &benchmark_config());
    let out = ofspc(&["validate", cfg.to_str().unwrap()]);
    let stdout = text(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}{}", text(&out.stderr));
    assert!(stdout.contains("kappa = 3"), "{stdout}");
    assert!(stdout.contains("d_o = 3, d_s = 1"));
}

#[test]
fn jordan_block_fails_with_domain_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = benchmark_config();
    cfg["A"] = json!([[0.9, 0, 0, 0], [0, 1, 1, 0], [0, 0, 1, 0], [0, 0, 0, 0.5]]);
    let path = write_config(dir.path(), "jordan.json", &cfg);
    let out = ofspc(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stdout).contains("A3") || text(&out.stderr).contains("A3"));
}

#[test]
fn missing_field_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = benchmark_config();
    cfg.as_object_mut().unwrap().remove("Sigma_w");
    let path = write_config(dir.path(), "broken.json", &cfg);
    let out = ofspc(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("Sigma_w"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(ofspc(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ofspc(&["validate", "/nonexistent/config.json"]).status.code(), Some(2));
}

#[test]
fn moment_cache_is_byte_identical_for_equal_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &quick_config());
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    for out in [&a, &b] {
        let res = ofspc(&[
            "moments",
            cfg.to_str().unwrap(),
            "--seed",
            "4",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(res.status.code(), Some(0), "{}", text(&res.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn tiny_sample_count_warns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &quick_config());
    let out_path = dir.path().join("m.bin");
    let out = ofspc(&[
        "moments",
        cfg.to_str().unwrap(),
        "--samples",
        "10",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stderr).contains("warning"));
}

#[test]
fn single_path_sweep_writes_complete_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &quick_config());
    let out_dir = dir.path().join("run");
    let out = ofspc(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--paths",
        "1",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "u_max,ms_bound,fallback_rate,mean_qp_iters,paths,steps,seed"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 9);
    for row in rows {
        let fields: Vec<f64> = row.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields.len(), 7);
        assert!(fields[1].is_finite() && fields[1] >= 0.0);
        assert_eq!(fields[4], 1.0);
        assert_eq!(fields[5], 30.0);
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sweep");
}

#[test]
fn simulate_writes_one_csv_per_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &quick_config());
    let out_dir = dir.path().join("sim");
    let out = ofspc(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--u-max",
        "2",
        "--paths",
        "3",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    for k in 0..3 {
        let csv = fs::read_to_string(out_dir.join(format!("path_{k}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 31);
    }
}

#[test]
fn stale_moment_cache_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &quick_config());
    let cache = dir.path().join("m.bin");
    let out = ofspc(&["moments", cfg.to_str().unwrap(), "--out", cache.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let mut other = quick_config();
    other["Sigma_w"] = json!([[2, 0, 0, 0], [0, 2, 0, 0], [0, 0, 2, 0], [0, 0, 0, 2]]);
    let other = write_config(dir.path(), "other.json", &other);
    let out_dir = dir.path().join("run");
    let out = ofspc(&[
        "simulate",
        other.to_str().unwrap(),
        "--moments",
        cache.to_str().unwrap(),
        "--paths",
        "1",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("stale"));
}
