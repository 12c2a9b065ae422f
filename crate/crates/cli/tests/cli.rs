use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn fbplab() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fbplab"));
    c.env("RUST_LOG", "error").stdout(std::process::Stdio::null());
    c
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn output_hashes(dir: &Path) -> BTreeMap<String, String> {
    manifest(dir)["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| (o["file"].as_str().unwrap().to_string(), o["sha256"].as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn missing_flux_in_a_config_file_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"grid": {"h": 0.01, "r_max": 3.0}}"#).unwrap();
    let out = fbplab()
        .args(["barriers", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("flux.j"), "{err}");
}

#[test]
fn bad_values_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fbplab()
        .args(["solve-fbp", "--set", "flux.j=-1", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("flux.j"));
}

#[test]
fn barriers_reach_the_requested_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("b");
    let status = fbplab()
        .args(["barriers", "--t", "1.0", "--M", "1.0", "--tol", "1e-3", "--out"])
        .arg(&run)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let levels = std::fs::read_to_string(run.join("levels.csv")).unwrap();
    let mut lines = levels.lines();
    assert_eq!(
        lines.next().unwrap(),
        "level,delta,gap_L1,gap_sup,mass_upper,mass_lower,refinement_defect"
    );
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!(last[3] <= 1e-3 + 10.0 * 0.0025, "{last:?}");
    assert!(run.join("separating.csv").exists() && run.join("separating.json").exists());
}

#[test]
fn unreachable_tolerance_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let status = fbplab()
        .args(["barriers", "--tol", "1e-9", "--set", "depth.max=4", "--set", "grid.h=0.01", "--out"])
        .arg(tmp.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(tmp.path().join("levels.csv").exists());
}

fn small_particles(dir: &Path, threads: &str) {
    let status = fbplab()
        .env("FBPLAB_THREADS", threads)
        .args([
            "simulate-particles",
            "--N",
            "300",
            "--replicas",
            "3",
            "--t",
            "0.2",
            "--seed",
            "11",
            "--set",
            "grid.h=0.01",
            "--set",
            "hydro.tol=0.2",
            "--set",
            "barriers.N=100",
            "--set",
            "barriers.runs=2",
            "--out",
        ])
        .arg(dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn same_seed_same_bytes_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    small_particles(&a, "1");
    small_particles(&b, "3");
    let (ha, hb) = (output_hashes(&a), output_hashes(&b));
    assert!(ha.contains_key("empirical_tails.csv") && ha.contains_key("barrier_flags.csv"));
    assert_eq!(ha, hb);
    assert_eq!(manifest(&a)["run_id"], manifest(&b)["run_id"]);
}

#[test]
fn every_written_file_is_in_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("lat");
    let status = fbplab()
        .args(["simulate-lattice", "--N", "16", "--t", "0.02", "--out"])
        .arg(&run)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let listed = output_hashes(&run);
    for entry in std::fs::read_dir(&run).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name != "manifest.json" {
            assert!(listed.contains_key(&name), "{name} not in manifest");
        }
    }
    let m = manifest(&run);
    assert_eq!(m["seeds"].as_array().unwrap().len(), 2);
    assert!(m["metrics"]["events"].as_u64().unwrap() > 0);
    let occ = std::fs::read_to_string(run.join("occupancy.csv")).unwrap();
    assert!(occ.starts_with("replica,t,x,xi\n"));
}

#[test]
fn variants_and_mass_process_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    for model in ["diffuse", "bd", "dr"] {
        let run = tmp.path().join(model);
        let status = fbplab()
            .args(["variants", model, "--N", "200", "--t", "0.2", "--out"])
            .arg(&run)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0), "{model}");
        let edges = std::fs::read_to_string(run.join("edges.csv")).unwrap();
        assert_eq!(edges.lines().count(), 5, "{model}");
        assert!(run.join("tails.csv").exists());
    }
    assert!(tmp.path().join("dr/meanfield.csv").exists());
    let run = tmp.path().join("mp");
    let out = fbplab()
        .args(["mass-process", "--N", "16", "--replicas", "50", "--set", "tolerance=10", "--out"])
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let m = manifest(&run);
    assert!(m["summary"]["oracle_variance"].as_f64().unwrap() > 0.0);
}

#[test]
fn solve_fbp_restores_mass_at_window_ends() {
    let tmp = tempfile::tempdir().unwrap();
    let status = fbplab()
        .args(["solve-fbp", "--T", "0.2", "--epsilon", "0.05", "--set", "grid.h=0.01", "--set", "dt=5e-4", "--out"])
        .arg(tmp.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let m = manifest(tmp.path());
    assert!(m["summary"]["max_restoration_error"].as_f64().unwrap() <= 1e-6);
    assert_eq!(m["summary"]["squeeze"]["pass"], Value::Bool(true));
    let edge = std::fs::read_to_string(tmp.path().join("edge.csv")).unwrap();
    assert_eq!(edge.lines().count(), 1 + 5);
}

#[test]
fn verify_order_and_the_flipped_cut() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = fbplab().args(["verify", "order", "--out"]).arg(tmp.path().join("ok")).status().unwrap();
    assert_eq!(ok.code(), Some(0));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("ok/report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], Value::Bool(true));
    assert_eq!(report["checks"][0]["detail"]["pairs"], 200);
    let bad = fbplab()
        .args(["verify", "order", "--mutate", "flip-cut", "--out"])
        .arg(tmp.path().join("bad"))
        .status()
        .unwrap();
    assert_eq!(bad.code(), Some(2));
}
