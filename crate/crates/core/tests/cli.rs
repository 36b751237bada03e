use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vorstab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vorstab"))
        .args(args)
        .current_dir(dir)
        .env("VORSTAB_THREADS", "1")
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn eig_prints_values_and_writes_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = vorstab(&["eig", "--domain", "disk", "--nr", "32", "--ntheta", "64", "--count", "2", "--which", "dirichlet", "--out", "e"], dir.path());
    assert!(out.status.success());
    let lines: Vec<f64> = String::from_utf8_lossy(&out.stdout).lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert!((lines[0] - 5.7832).abs() < 0.06);
    let doc = json(&dir.path().join("e/eigen.json"));
    assert_eq!(doc["multiplicities"][1], 2);
    let manifest = json(&dir.path().join("e/manifest.json"));
    for f in manifest["outputs"].as_array().unwrap() {
        assert!(dir.path().join("e").join(f.as_str().unwrap()).exists());
    }
    assert_eq!(manifest["configs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn cap_on_the_disk_is_the_first_dirichlet_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = vorstab(&["eig", "--domain", "disk", "--nr", "32", "--ntheta", "64", "--which", "cap"], dir.path());
    assert!(out.status.success());
    let v: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((v - 5.7832).abs() < 0.06);
}

#[test]
fn bad_flags_and_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = vorstab(&["eig", "--domain", "disk", "--ntheta", "64"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = vorstab(&["simulate", "--config", "missing.json", "--out", "s"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = vorstab(&["eig", "--domain", "annulus", "--nr", "8", "--ntheta", "8"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = vorstab(&["experiment", "nonsense", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(vorstab(&["--help"], dir.path()).status.success());
}

const SIM: &str = r#"{"a": 0, "nr": 12, "ntheta": 24, "dt": {"kind": "cfl", "cfl": 0.5}, "t_end": 0.5,
 "snapshot_stride": 10, "initial": {"kind": "rotating_wave", "n": 4},
 "perturbation": {"seed": 9, "amplitude": 0.01}, "track_reference": true, "track_orbit": true, "snapshots": true}"#;

#[test]
fn simulate_then_ascend() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sim.json"), SIM).unwrap();
    let out = vorstab(&["simulate", "--config", "sim.json", "--out", "s"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let series = fs::read_to_string(dir.path().join("s/series.csv")).unwrap();
    assert!(series.starts_with("t,E,I,mean,enstrophy,m4,dist_ref_p,orbit_dist,orbit_angle\n"));
    assert!(dir.path().join("s/snap_0.csv").exists());
    let summary = json(&dir.path().join("s/summary.json"));
    assert!(summary["drifts"]["energy"].as_f64().unwrap() < 1e-3);

    // identical configuration gives byte-identical CSV output
    let again = vorstab(&["simulate", "--config", "sim.json", "--out", "s2"], dir.path());
    assert!(again.status.success());
    assert_eq!(series, fs::read_to_string(dir.path().join("s2/series.csv")).unwrap());
    assert_eq!(
        fs::read(dir.path().join("s/final.csv")).unwrap(),
        fs::read(dir.path().join("s2/final.csv")).unwrap()
    );

    let out = vorstab(&["ascend", "--seed", "s/snap_0.csv", "--gamma", "0", "--out", "a"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&dir.path().join("a/ascent.json"));
    let e: Vec<f64> = rep["energies"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(e.windows(2).all(|w| w[1] >= w[0]));
    assert!(dir.path().join("a/manifest.json").exists());
}

#[test]
fn simulate_rejects_mismatched_initial_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sim.json"), SIM).unwrap();
    assert!(vorstab(&["simulate", "--config", "sim.json", "--out", "s"], dir.path()).status.success());
    let cfg = r#"{"a": 0, "nr": 16, "ntheta": 24, "dt": {"kind": "cfl", "cfl": 0.5}, "t_end": 0.1,
                  "initial": {"kind": "file", "path": "s/final.csv"}}"#;
    fs::write(dir.path().join("bad.json"), cfg).unwrap();
    let out = vorstab(&["simulate", "--config", "bad.json", "--out", "b"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn experiment_writes_report_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("rig.json"), r#"{"nr": 16, "ntheta": 32, "ascent_runs": 3}"#).unwrap();
    let out = vorstab(&["experiment", "rigidity", "--config", "rig.json", "--out", "r"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(&dir.path().join("r/report.json"));
    assert_eq!(report["status"], "PASS");
    for v in report["verdicts"].as_array().unwrap() {
        for e in v["evidence"].as_array().unwrap() {
            assert!(dir.path().join("r").join(e.as_str().unwrap()).exists());
        }
    }
    assert!(String::from_utf8_lossy(&out.stdout).lines().all(|l| l.starts_with("PASS ")));

    // an impossible response factor turns the verdicts into failures
    fs::write(
        dir.path().join("stab.json"),
        r#"{"nr": 12, "ntheta": 24, "t_end": 0.5, "response_factor": 0.5, "annulus": null}"#,
    )
    .unwrap();
    let out = vorstab(&["experiment", "stability", "--config", "stab.json", "--out", "s"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&dir.path().join("s/report.json"))["status"], "FAIL");
    assert!(dir.path().join("s/series_delta1em1.csv").exists());

    // a drift gate nobody can meet marks the runs invalid rather than failed
    fs::write(
        dir.path().join("gate.json"),
        r#"{"nr": 12, "ntheta": 24, "t_end": 0.5, "drift_gate": 1e-30, "annulus": null}"#,
    )
    .unwrap();
    let out = vorstab(&["experiment", "stability", "--config", "gate.json", "--out", "g"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}
