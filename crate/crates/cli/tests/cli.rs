use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nvctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvctl")).args(args).output().expect("nvctl runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(p: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(p).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()));
    rows
}

const SMALL_JOB: &str = r#"
[crystal]
cut = "100"

[hamiltonian]
mode = "phenomenological"
omega_nv_mhz = [2.64, 1.03]
labels = ["A", "B"]
eta_deg = 115.0

[pulse]
n_steps = 60
dt_ns = 40.0

[target]
kind = "state"
initial = "0"
final = "0"

[optimizer]
max_iter = 200
seed = 3
"#;

#[test]
fn rotations_are_proper() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvctl(&["rotations", "--cut", "100", "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("rotations.csv"));
    assert_eq!(rows[0][0], "orientation");
    assert_eq!(rows.len(), 5);
    for row in &rows[1..] {
        let m: Vec<f64> = row[1..10].iter().map(|v| v.parse().unwrap()).collect();
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| m[3 * i + k] * m[3 * j + k]).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
        assert!((row[10].parse::<f64>().unwrap() - 1.0).abs() < 1e-10);
    }
    assert!(dir.path().join("run-manifest.json").exists());
}

#[test]
fn identity_job_reaches_goal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("c100_identity.toml");
    let out = nvctl(&["optimize", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], true);
    assert!(report["min_fidelity"].as_f64().unwrap() >= 0.99);
    let pulse = read_csv(&dir.path().join("pulse.csv"));
    assert_eq!(pulse[0], ["step", "dt_ns", "omega1", "omega2", "theta1_deg", "theta2_deg"]);
    assert_eq!(pulse.len(), 251);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run-manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_dt_is_a_config_error_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("job.toml");
    fs::write(&cfg, SMALL_JOB.replace("dt_ns = 40.0\n", "")).unwrap();
    let out = nvctl(&["optimize", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("pulse") && err.contains("dt_ns"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("job.toml");
    fs::write(&cfg, SMALL_JOB.replace("seed = 3", "seed = 3\nlearning_rate = 0.1")).unwrap();
    let out = nvctl(&["optimize", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("optimizer") && err.contains("learning_rate"), "{err}");
}

#[test]
fn io_failures_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvctl(&["optimize", "--config", s(&dir.path().join("absent.toml")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    let file = dir.path().join("file");
    fs::write(&file, "x").unwrap();
    let out = nvctl(&["rotations", "--cut", "110", "--out", s(&file)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_reproduces_reported_fidelities() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("job.toml");
    fs::write(&cfg, SMALL_JOB).unwrap();
    let o1 = dir.path().join("opt");
    assert!(nvctl(&["optimize", "--config", s(&cfg), "--out", s(&o1)]).status.success());
    let o2 = dir.path().join("sim");
    let out = nvctl(&["simulate", "--config", s(&cfg), "--pulse", s(&o1.join("pulse.csv")), "--out", s(&o2)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = read_csv(&o2.join("trajectory.csv"));
    assert_eq!(traj[0], ["step", "t_ns", "member_id", "xp", "yp", "zp", "xm", "ym", "zm", "pop0", "pop+1", "pop-1"]);
    let fid = read_csv(&o1.join("fidelities.csv"));
    for member in 0..2 {
        let last = traj.iter().rev().find(|r| r[2] == member.to_string()).unwrap();
        assert_eq!(last[0], "60");
        let pop0: f64 = last[9].parse().unwrap();
        let f: f64 = fid[member + 1][6].parse().unwrap();
        // The pulse file holds 12 significant digits.
        assert!((pop0 - f).abs() < 1e-8, "{pop0} vs {f}");
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("job.toml");
    fs::write(&cfg, SMALL_JOB).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for o in [&a, &b] {
        assert!(nvctl(&["optimize", "--config", s(&cfg), "--out", s(o), "--seed", "9"]).status.success());
    }
    for f in ["pulse.csv", "fidelities.csv", "iterations.csv", "report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    assert!(nvctl(&["optimize", "--config", s(&cfg), "--out", s(&c), "--seed", "10"]).status.success());
    assert_ne!(fs::read(a.join("pulse.csv")).unwrap(), fs::read(c.join("pulse.csv")).unwrap());
}

#[test]
fn field_map_and_groups() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("c110_selective.toml");
    let out = nvctl(&["fields", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let f = read_csv(&dir.path().join("fields.csv"));
    assert_eq!(f[0], ["x", "z", "wx1", "wz1", "wx2", "wz2", "eta_deg"]);
    assert!(f.len() > 100);
    assert_eq!(read_csv(&dir.path().join("groups.csv")).len(), 5);
}

#[test]
fn spinlock_and_bloch_export() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvctl(&["spinlock", "--config", s(&configs().join("c100_spinlock.toml")), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("spinlock.csv"));
    assert_eq!(rows[0], ["t_us", "member_id", "label", "pop0"]);
    assert_eq!(rows.len(), 1 + 2 * 201);

    let cfg = dir.path().join("job.toml");
    fs::write(&cfg, SMALL_JOB).unwrap();
    let pulse = dir.path().join("p.csv");
    fs::write(&pulse, "step,dt_ns,omega1,omega2\n0,40,1,0\n1,40,0.5,0.5\n").unwrap();
    let out = nvctl(&["bloch-export", "--config", s(&cfg), "--pulse", s(&pulse), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("bloch.csv"));
    // 3 points × 2 spheres × 2 members
    assert_eq!(rows.len(), 1 + 12);
}

#[test]
fn malformed_pulse_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("job.toml");
    fs::write(&cfg, SMALL_JOB).unwrap();
    let pulse = dir.path().join("p.csv");
    fs::write(&pulse, "step,dt_ns,omega1,omega2\n0,40,1.5,0\n").unwrap();
    let out = nvctl(&["simulate", "--config", s(&cfg), "--pulse", s(&pulse), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}
