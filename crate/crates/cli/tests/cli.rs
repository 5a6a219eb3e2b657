use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crysplas")).current_dir(dir).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn version_reports_toolkit_and_format() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["--version"]);
    assert!(o.status.success());
    let s = String::from_utf8(o.stdout).unwrap();
    assert!(s.starts_with("crysplas ") && s.contains("format 1"), "{s}");
}

#[test]
fn linear_energy_of_zero_state_is_zero() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["energy", "eval", "--model", "linear", "--out", "o"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&d.path().join("o/energy.json"));
    assert_eq!(r["total"], 0.0);
    assert_eq!(r["feasible"], true);
    let m = json(&d.path().join("o/manifest.json"));
    assert!(m["artifacts"]["energy.json"].as_str().unwrap().len() == 64);
}

#[test]
fn nonlinear_gate_rejects_p_two() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["energy", "eval", "--model", "nonlinear", "--p", "2", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert_eq!(e.lines().count(), 1, "{e}");
    assert!(e.starts_with("error[config]:") && e.contains("requires p > 2"), "{e}");
    let o = run(d.path(), &["minimize", "--p", "1", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("requires p > 1"));
}

#[test]
fn example_41_reports_both_flat_values() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["example", "ex41", "--X", "10", "--eps", "0.1", "--out", "o"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&d.path().join("o/ex41.json"));
    assert!((r["flat_paper_formula"].as_f64().unwrap() - 50.2).abs() < 1e-12);
    let flat = r["flat_plastic"].as_f64().unwrap();
    assert!((flat - r["flat_closed_form"].as_f64().unwrap()).abs() < 1e-3, "{flat}");
}

#[test]
fn usage_and_io_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[usage]:"));
    let o = run(d.path(), &["--config", "missing.json", "systems", "validate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[io]:"));
    fs::write(d.path().join("bad.json"), r#"{"params": {"p": "four"}}"#).unwrap();
    let o = run(d.path(), &["--config", "bad.json", "systems", "validate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[config]:"));
    fs::write(d.path().join("nofield.json"), r#"{"fields": {"slip": "nowhere.csv"}}"#).unwrap();
    let o = run(d.path(), &["--config", "nofield.json", "energy", "eval", "--model", "linear"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[io]:"), "{}", stderr(&o));
}

#[test]
fn identical_runs_give_identical_artifacts() {
    let d = tempfile::tempdir().unwrap();
    let a = run(d.path(), &["oracle", "cof", "--count", "5", "--seed", "3", "--out", "a"]);
    let b = run(d.path(), &["oracle", "cof", "--count", "5", "--seed", "3", "--out", "b", "--threads", "1"]);
    assert!(a.status.success() && b.status.success());
    let (ma, mb) = (json(&d.path().join("a/manifest.json")), json(&d.path().join("b/manifest.json")));
    assert_eq!(ma["artifacts"], mb["artifacts"]);
    assert_eq!(ma["seed"], 3);
    assert_eq!(
        fs::read(d.path().join("a/oracle_cof.json")).unwrap(),
        fs::read(d.path().join("b/oracle_cof.json")).unwrap()
    );
    let c = run(d.path(), &["oracle", "cof", "--count", "5", "--seed", "4", "--out", "c"]);
    assert!(c.status.success());
    assert_ne!(json(&d.path().join("c/manifest.json"))["artifacts"], ma["artifacts"]);
}

#[test]
fn flags_override_the_config() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("c.json"), r#"{"systems": "ortho2", "params": {"p": 4, "sigma": 2}, "seed": 9, "out": "from-config"}"#)
        .unwrap();
    let o = run(d.path(), &["--config", "c.json", "--p", "3", "systems", "validate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = json(&d.path().join("from-config/manifest.json"));
    assert_eq!(m["config"]["params"]["p"], 3.0);
    assert_eq!(m["config"]["params"]["sigma"], 2.0);
    assert_eq!(m["seed"], 9);
    assert_eq!(json(&d.path().join("from-config/systems.json"))["pass"], true);
}

fn write_grid_config(dir: &Path, slip_rows: &str) {
    fs::write(dir.join("slip.csv"), format!("x,y,z,plane,sx,sy,sz\n{slip_rows}")).unwrap();
    fs::write(
        dir.join("c.json"),
        r#"{"systems": {"planes": [
                {"m": [0, 0, 1], "burgers": [[1, 0, 0], [0, 1, 0]]},
                {"m": [0, 1, 0], "burgers": [[1, 0, 0], [0, 0, 1]]}]},
            "grid": {"origin": [0, 0, 0], "extents": [1, 1, 1], "nodes": [9, 9, 9]},
            "params": {"p": 2},
            "fields": {"slip": "slip.csv"}}"#,
    )
    .unwrap();
}

#[test]
fn infeasible_field_fails_the_checks() {
    let d = tempfile::tempdir().unwrap();
    write_grid_config(d.path(), "0.5,0.5,0.5,0,1,0,0\n0.5,0.5,0.5,1,0,0,1\n");
    let o = run(d.path(), &["--config", "c.json", "energy", "eval", "--model", "relaxed", "--out", "o"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert_eq!(json(&d.path().join("o/energy.json"))["total"], "inf");
    let o = run(d.path(), &["--config", "c.json", "oracle", "exclusion", "--out", "o"]);
    assert_eq!(o.status.code(), Some(1));
    let v = json(&d.path().join("o/oracle_exclusion.json"));
    assert_eq!(v["pass"], false);
    assert!(v["details"]["rejected_at_gate"].is_string());
}

#[test]
fn configured_field_passes_oracles_and_laminates() {
    let d = tempfile::tempdir().unwrap();
    let mut rows = String::new();
    for k in 0..9 {
        let z = k as f64 / 8.0;
        rows += &format!("0.25,0.5,{z},0,{},0.5,0\n", 1.0 + z);
    }
    write_grid_config(d.path(), &rows);
    for oracle in ["div", "curl", "exclusion", "chain"] {
        let o = run(d.path(), &["--config", "c.json", "oracle", oracle, "--out", "o"]);
        assert_eq!(o.status.code(), Some(0), "{oracle}: {}", stderr(&o));
        assert_eq!(json(&d.path().join(format!("o/oracle_{oracle}.json")))["pass"], true);
    }
    let o = run(d.path(), &["--config", "c.json", "laminate", "build", "--level", "1", "--out", "l"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(d.path().join("l/laminate_slip.csv").exists());
}

#[test]
fn small_minimisation_writes_a_trace() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("c.json"),
        r#"{"systems": "ortho2", "grid": {"origin": [0, 0, 0], "extents": [1, 1, 1], "nodes": [5, 5, 5]},
            "params": {"p": 2, "sigma": 0.05, "tau": 0.2},
            "solver": {"boundary": {"kind": "shear", "gamma": 0.5, "axes": [0, 1]}, "max_outer": 4}}"#,
    )
    .unwrap();
    let o = run(d.path(), &["--config", "c.json", "minimize", "--out", "m"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = fs::read_to_string(d.path().join("m/trace.csv")).unwrap();
    assert!(trace.starts_with("iter,elastic,hardening,gnd,reg,total,feasible"));
    let totals: Vec<f64> = trace.lines().skip(1).map(|l| l.split(',').nth(5).unwrap().parse().unwrap()).collect();
    assert!((totals[0] - 0.125).abs() < 1e-6, "{totals:?}");
    assert!(totals.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    let r = json(&d.path().join("m/minimize.json"));
    assert_eq!(r["monotone"], true);
}
