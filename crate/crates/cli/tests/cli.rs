use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn gks(cmd: &str, config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gks"))
        .args([cmd, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_ok(cmd: &str, config: &Path, out: &Path) {
    let o = gks(cmd, config, out);
    assert!(
        o.status.success(),
        "gks {cmd} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn run_err(cmd: &str, config: &Path, out: &Path) -> String {
    let o = gks(cmd, config, out);
    assert!(!o.status.success(), "gks {cmd} should have failed");
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const DECAY: &str = r#"
[equation]
nu = 1.5

[stepper]
t_final = 50.0
record_interval = 1.0

[initial]
kind = "coefficients"
values = [0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
"#;

const FEEDBACK_ZERO: &str = r#"
[equation]
nu = 0.2

[stepper]
t_final = 1.0
record_interval = 0.1

[initial]
kind = "five_mode"

[actuators]
count = 5

[target]
kind = "zero"

[output]
grid = 64
"#;

#[test]
fn stable_regime_decays_and_has_grid_schema() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "decay.toml", DECAY);
    let out = dir.path().join("run");
    run_ok("simulate", &cfg, &out);
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 257);
    assert_eq!(header[0], "t");
    assert_eq!(header[1], "x0");
    assert_eq!(header[256], "x255");
    let summary = json(&out.join("summary.json"));
    assert!(summary["final_l2"].as_f64().unwrap() < 1e-6);
    assert_eq!(summary["bounded"], true);
}

#[test]
fn reruns_and_manifest_replays_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "fb.toml", FEEDBACK_ZERO);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    run_ok("feedback", &cfg, &a);
    run_ok("feedback", &cfg, &b);
    run_ok("feedback", &a.join("manifest.json"), &c);
    for name in ["trajectory.csv", "controls.csv", "gain.csv", "residual.csv", "lyapunov.csv", "summary.json", "manifest.json"] {
        let x = fs::read(a.join(name)).unwrap();
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name} differs between runs");
        assert_eq!(x, fs::read(c.join(name)).unwrap(), "{name} differs on replay");
    }
}

#[test]
fn feedback_outputs_follow_schemas() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "fb.toml", FEEDBACK_ZERO);
    let out = dir.path().join("run");
    run_ok("feedback", &cfg, &out);
    let controls = fs::read_to_string(out.join("controls.csv")).unwrap();
    assert_eq!(controls.lines().next().unwrap(), "t,f1,f2,f3,f4,f5");
    assert_eq!(controls.lines().count(), 12);
    let gain = fs::read_to_string(out.join("gain.csv")).unwrap();
    let rows: Vec<&str> = gain.lines().collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[1..].iter().all(|r| r.split(',').count() == 5));
    let lyap = fs::read_to_string(out.join("lyapunov.csv")).unwrap();
    assert_eq!(lyap.lines().next().unwrap(), "t,V,dVdt");
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "feedback");
    assert_eq!(manifest["config"]["stepper"]["dt"], 0.001);
    assert_eq!(manifest["config"]["equation"]["modes"], 32);
}

#[test]
fn validation_rejects_bad_configs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let cases = [
        (FEEDBACK_ZERO.replace("count = 5", "count = 0"), "at least 1"),
        (
            FEEDBACK_ZERO.replace("count = 5", "positions = [1.0, 1.0, 3.0]"),
            "overlap",
        ),
        (FEEDBACK_ZERO.replace("t_final = 1.0", "t_final = 1e-4"), "shorter than one step"),
        (FEEDBACK_ZERO.replace("nu = 0.2", "nu = 0.2\nviscosity = 1.0"), "unknown field"),
        (
            FEEDBACK_ZERO.replace("count = 5", "count = 5\npositions = [1.0, 2.0]"),
            "not both",
        ),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let cfg = write_config(&dir, &format!("bad{i}.toml"), text);
        let err = run_err("feedback", &cfg, &out);
        assert!(err.contains(needle), "case {i}: expected '{needle}' in: {err}");
    }
}

#[test]
fn equilibria_writes_branch_and_sidecars() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "eq.toml",
        r#"
[equation]
nu = 1.0
modes = 16

[continuation]
branches = [1]
nu_end = 0.8
"#,
    );
    let out = dir.path().join("run");
    run_ok("equilibria", &cfg, &out);
    let csv = fs::read_to_string(out.join("branch1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "param,L2norm,stable,c");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() > 2);
    assert!((rows.last().unwrap()[0] - 0.8).abs() < 1e-12);
    // Unimodal states just below onset are stable.
    assert!(rows.iter().all(|r| r[2] == 1.0));
    let side = fs::read_to_string(out.join("coefficients/branch1/0000.txt")).unwrap();
    assert_eq!(side.lines().count(), 33);
}

#[test]
fn optimize_writes_iterates() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "opt.toml",
        r#"
[equation]
nu = 0.9

[initial]
kind = "first_mode"

[actuators]
count = 3

[target]
kind = "zero"

[cost]
horizon = 1.0

[placement]
max_iterations = 2
"#,
    );
    let out = dir.path().join("run");
    run_ok("optimize", &cfg, &out);
    let csv = fs::read_to_string(out.join("iterates.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "iter,cost,control_energy,x1,x2,x3");
    let costs: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(!costs.is_empty());
    assert!(costs.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn coupled_run_uses_field_prefixes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.toml",
        r#"
target = "zero"

[equation]
nu = 0.5
alpha1 = 0.8
alpha2 = 0.5
modes = 16

[stepper]
t_final = 1.0
record_interval = 0.5

[initial.u1]
kind = "first_mode"

[initial.u2]
kind = "zero"

[actuators]
count = 4

[output]
grid = 8
"#,
    );
    let out = dir.path().join("run");
    run_ok("coupled", &cfg, &out);
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t,u1_x0,"));
    assert!(header.ends_with(",u2_x7"));
    let controls = fs::read_to_string(out.join("controls.csv")).unwrap();
    assert_eq!(
        controls.lines().next().unwrap(),
        "t,u1_f1,u1_f2,u1_f3,u1_f4,u2_f1,u2_f2,u2_f3,u2_f4"
    );
    let s = json(&out.join("summary.json"));
    assert_eq!((s["l1"].as_u64(), s["l2"].as_u64(), s["m"].as_u64()), (Some(1), Some(0), Some(4)));
}

#[test]
fn robustness_without_mismatch_is_guaranteed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "r.toml", FEEDBACK_ZERO);
    let out = dir.path().join("run");
    run_ok("robustness", &cfg, &out);
    let margin = json(&out.join("margin.json"));
    let zeta = margin["zeta"].as_f64().unwrap();
    assert!(zeta >= margin["lower_bound"].as_f64().unwrap() * (1.0 - 1e-9));
    assert!(margin["omega_star"].is_number());
    let r = json(&out.join("robustness.json"));
    assert_eq!(r["uncertainty_norm"], 0.0);
    assert_eq!(r["verdict"], "guaranteed");
}
