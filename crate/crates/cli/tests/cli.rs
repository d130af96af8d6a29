use std::path::Path;
use std::process::{Command, Output};

use conncoord::config::{parse_config, SI_FIG1};
use serde_json::Value;

fn conncoord(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conncoord"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn si_with(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) -> String {
    let mut v: Value = serde_json::from_str(SI_FIG1).unwrap();
    v["name"] = Value::from(name);
    edit(&mut v);
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path.display().to_string()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&conncoord(&["frobnicate"])), 2);
    assert_eq!(code(&conncoord(&["run", "/nonexistent/scenario.json"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = si_with(dir.path(), "bad", |v| v["step"] = Value::from(0.0));
    let out = conncoord(&["check-gains", &bad]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("step"));
    assert_eq!(code(&conncoord(&["run", "si_fig1", "--horizon", "-1"])), 2);
}

#[test]
fn weak_damping_fails_the_gain_check() {
    let dir = tempfile::tempdir().unwrap();
    let weak = si_with(dir.path(), "weak", |v| {
        for k in v["damping"].as_array_mut().unwrap() {
            *k = Value::from(k.as_f64().unwrap() * 1e-3);
        }
    });
    let out = conncoord(&["check-gains", &weak, "--json"]);
    assert_eq!(code(&out), 1);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["policy"], "bypass");
}

#[test]
fn passing_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = si_with(dir.path(), "stiff", |v| v["p"] = Value::from(100.0));
    let out_dir = dir.path().join("out");
    let out = conncoord(&["run", &cfg, "--out", out_dir.to_str().unwrap(), "--svg", "--horizon", "20"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    for ext in ["csv", "svg", "report.json"] {
        assert!(out_dir.join(format!("stiff.{ext}")).is_file(), "missing {ext}");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("stiff.report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["overrides"]["horizon"], 20.0);
    // the embedded scenario reproduces the run
    let embedded = parse_config(&report["scenario"].to_string()).unwrap().config;
    let original = parse_config(&std::fs::read_to_string(&cfg).unwrap()).unwrap().config;
    assert_eq!(embedded, original.with_overrides(None, None, Some(20.0)).unwrap());
}

#[test]
fn bundled_single_integrator_run_fails_its_monitors() {
    let dir = tempfile::tempdir().unwrap();
    let out = conncoord(&["run", "si_fig1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("monitors: fail"), "{stdout}");
    assert!(dir.path().join("si_fig1.csv").is_file());
    assert!(!dir.path().join("si_fig1.svg").exists());
}

#[test]
fn enforce_policy_refuses_to_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = si_with(dir.path(), "strict", |v| v["gain_check"] = Value::from("enforce"));
    let out = conncoord(&["run", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("refusing to run"));
    assert!(!dir.path().join("strict.csv").exists());
    assert!(dir.path().join("strict.report.json").is_file());
}

#[test]
fn feasibility_and_verify_subcommands() {
    assert_eq!(code(&conncoord(&["feasibility", "el_fig2"])), 0);
    let out = conncoord(&["feasibility", "si_fig1", "--json"]);
    assert!(serde_json::from_slice::<Value>(&out.stdout).is_ok());
    assert_eq!(code(&conncoord(&["verify", "--instances", "50", "--seed", "3"])), 0);
}
