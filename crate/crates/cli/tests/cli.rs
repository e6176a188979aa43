use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.json")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn gaudin(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaudin"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn manifest(out: &Path) -> Value {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    read_json(Path::new(&name))
}

fn error_code(output: &Output) -> String {
    let err: Value = serde_json::from_slice(&output.stderr).unwrap();
    err["code"].as_str().unwrap().to_string()
}

fn series(path: &Path) -> Vec<(f64, f64)> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,value"));
    lines
        .map(|l| {
            let (t, v) = l.split_once(',').unwrap();
            (t.parse().unwrap(), v.parse().unwrap())
        })
        .collect()
}

#[test]
fn single_spin_spectrum_has_both_zeeman_levels() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "c.json", r#"{"epsilons":[0],"field":{"bx":0,"by":0,"bz":1},"weights":[1]}"#);
    let out = dir.path().join("s.json");
    let run = gaudin(&["spectrum"], &config, &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let records = read_json(&out);
    let mut energies: Vec<f64> = records.as_array().unwrap().iter().map(|r| r["energy"].as_f64().unwrap()).collect();
    energies.sort_by(f64::total_cmp);
    assert_eq!(energies.len(), 2);
    assert!((energies[0] + 0.5).abs() < 1e-12 && (energies[1] - 0.5).abs() < 1e-12);
    assert_eq!(manifest(&out)["status"], "ok");
}

#[test]
fn spectrum_records_are_sorted_and_converged() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "c.json", r#"{"epsilons":[0,1.3,0.4],"field":{"bx":0.3,"by":0.4,"bz":0.5}}"#);
    let out = dir.path().join("s.json");
    assert!(gaudin(&["spectrum"], &config, &out).status.success());
    let records = read_json(&out);
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), 8);
    let labels: Vec<&str> = records.iter().map(|r| r["label"].as_str().unwrap()).collect();
    let mut sorted = labels.clone();
    sorted.sort_by_key(|l| l.chars().rev().collect::<String>());
    assert_eq!(labels, sorted);
    for r in records {
        assert!(r["residuals"]["rotated"].as_f64().unwrap() < 1e-12);
        assert!(r["residuals"]["common"].as_f64().unwrap() < 1e-12);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert!(gaudin(&["spectrum", "--threads", "1"], &demo(), &a).status.success());
    assert!(gaudin(&["spectrum", "--threads", "3"], &demo(), &b).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn duplicate_epsilons_are_a_config_error() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "c.json", r#"{"epsilons":[1,1],"field":{"bx":1,"by":0,"bz":0}}"#);
    let out = dir.path().join("s.json");
    let run = gaudin(&["spectrum"], &config, &out);
    assert_eq!(run.status.code(), Some(2));
    assert_eq!(error_code(&run), "DuplicateEpsilon");
    assert_eq!(manifest(&out)["status"], "error");
}

#[test]
fn unreadable_config_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let run = gaudin(&["spectrum"], &dir.path().join("missing.json"), &dir.path().join("s.json"));
    assert_eq!(run.status.code(), Some(2));
    assert_eq!(error_code(&run), "ConfigIo");
}

#[test]
fn verify_passes_on_the_demo() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("v.json");
    let run = gaudin(&["verify"], &demo(), &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report = read_json(&out);
    assert_eq!(report["pass"], true);
    assert_eq!(report["states"].as_array().unwrap().len(), 16);
}

#[test]
fn verify_locates_a_corrupted_solution() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("v.json");
    let run = gaudin(&["verify", "--perturb", "0.1"], &demo(), &out);
    assert_eq!(run.status.code(), Some(4));
    let report = read_json(&out);
    assert_eq!(report["pass"], false);
    let failures: Vec<&str> = report["failures"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    assert!(failures.iter().any(|f| f.starts_with("0000 residual_common")), "{failures:?}");
    assert!(failures.iter().all(|f| f.starts_with("0000 ")), "{failures:?}");
}

#[test]
fn verify_with_nmax_one_runs_single_spin_checks() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("v.json");
    assert!(gaudin(&["verify", "--nmax", "1"], &demo(), &out).status.success());
    let report = read_json(&out);
    assert_eq!(report["n"], 1);
    let names: Vec<&str> = report["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["lambda_closed_form", "charge_closed_form", "ed_levels"]);

    let small = dir.path().join("w.json");
    let run = gaudin(&["verify", "--nmax", "3"], &demo(), &small);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn rabi_quench() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "c.json", r#"{"epsilons":[0],"field":{"bx":1,"by":0,"bz":0},"weights":[1]}"#);
    let out = dir.path().join("q.csv");
    let run = gaudin(
        &["quench", "--initial", "1", "--observable", "sz:0", "--tmax", "10", "--steps", "101"],
        &config,
        &out,
    );
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let rows = series(&out);
    assert_eq!(rows.len(), 101);
    for (t, v) in rows {
        assert!((v - 0.5 * t.cos()).abs() < 1e-9, "t={t}");
    }
    assert!(manifest(&out)["details"]["weight_deviation"].as_f64().unwrap().abs() < 1e-9);
}

#[test]
fn single_step_quench_has_one_row() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("q.csv");
    let run = gaudin(
        &["quench", "--initial", "0110", "--observable", "sz:1", "--t0", "0", "--tmax", "4", "--steps", "1"],
        &demo(),
        &out,
    );
    assert!(run.status.success());
    let rows = series(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].0, 0.0);
    assert!((rows[0].1 - 0.5).abs() < 1e-12);
}

#[test]
fn demo_quench_matches_direct_propagation() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("q.json");
    let run = gaudin(
        &["quench", "--initial", "1010", "--observable", "sx:2", "--tmax", "10", "--steps", "51", "--check", "--json"],
        &demo(),
        &out,
    );
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(manifest(&out)["details"]["max_oracle_deviation"].as_f64().unwrap() < 1e-8);
    let data = read_json(&out);
    assert_eq!(data["values"].as_array().unwrap().len(), 51);
    assert_eq!(data["expansion"].as_array().unwrap().len(), 16);
}

#[test]
fn quench_without_in_plane_field_has_its_own_exit_code() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "c.json", r#"{"epsilons":[0,1],"field":{"bx":0,"by":0,"bz":1}}"#);
    let out = dir.path().join("q.csv");
    let run = gaudin(&["quench", "--initial", "10", "--observable", "sz:0", "--tmax", "1", "--steps", "3"], &config, &out);
    assert_eq!(run.status.code(), Some(5));
    assert_eq!(error_code(&run), "ZeroInPlaneField");
}

#[test]
fn overlaps_and_projections_agree_with_fock_space() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o.json");
    let run = gaudin(&["overlap", "--check"], &demo(), &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(read_json(&out).as_array().unwrap().len(), 16 * 17 / 2);

    let one = dir.path().join("o1.json");
    assert!(gaudin(&["overlap", "--a", "0100", "--b", "0110"], &demo(), &one).status.success());
    assert_eq!(read_json(&one).as_array().unwrap().len(), 1);

    let out = dir.path().join("p.json");
    let run = gaudin(&["project", "--up", "0110", "--check"], &demo(), &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(manifest(&out)["details"]["max_relative_difference"].as_f64().unwrap() < 1e-10);

    let bad = gaudin(&["project", "--up", "01"], &demo(), &dir.path().join("x.json"));
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn roots_reproduce_every_state() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.json");
    assert!(gaudin(&["roots"], &demo(), &out).status.success());
    for r in read_json(&out).as_array().unwrap() {
        assert!(r["round_trip"].as_f64().unwrap() < 1e-8);
        assert!(r["conjugation_defect"].as_f64().unwrap() < 1e-7);
        assert_eq!(r["roots"].as_array().unwrap().len(), 4);
    }
}
