use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spncs"))
}

fn tmp(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("spncs-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn mati_reports_both_bounds() {
    let out = run(&["mati"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["mati_s_bound"].as_f64().unwrap() - 0.36174).abs() < 1e-5);
    assert!((v["mati_f_bound_fast_time"].as_f64().unwrap() - 1.10706).abs() < 1e-5);
    assert!(v["per_epsilon"][0]["miati_f_max"].as_f64().unwrap() > 0.0);
}

#[test]
fn design_writes_certificate() {
    let d = tmp("design");
    let out = run(&["design", "--out", d.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("certificate.json")).unwrap()).unwrap();
    let eps = v["certificate"]["epsilon_star"].as_f64().unwrap();
    assert!((eps - 0.004945106144539406).abs() < 1e-12);
    assert_eq!(v, json(&out));
}

#[test]
fn simulate_is_byte_identical_across_runs_and_threads() {
    let (a, b) = (tmp("sim-a"), tmp("sim-b"));
    let args = |d: &Path| {
        vec![
            "simulate".to_string(),
            "--t-end".into(),
            "0.5".into(),
            "--seed".into(),
            "1,2,3".into(),
            "--policy".into(),
            "random".into(),
            "--out".into(),
            d.to_string_lossy().into_owned(),
        ]
    };
    let ra = bin().args(args(&a)).env("SPNCS_THREADS", "1").output().unwrap();
    let rb = bin().args(args(&b)).env("SPNCS_THREADS", "4").output().unwrap();
    assert_eq!(ra.status.code(), Some(0), "{}", String::from_utf8_lossy(&ra.stderr));
    assert_eq!(rb.status.code(), Some(0));
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 4, "{names:?}");
    for n in &names {
        if n.to_string_lossy().ends_with(".csv") {
            assert!(std::fs::read(a.join(n)).unwrap() == std::fs::read(b.join(n)).unwrap(), "{n:?} differs");
        }
    }
    let strip = |o: &Output, d: &Path| String::from_utf8_lossy(&o.stdout).replace(d.to_str().unwrap(), "OUT");
    assert_eq!(strip(&ra, &a), strip(&rb, &b));
}

#[test]
fn certify_accepts_a_simulated_trajectory() {
    let d = tmp("certify");
    let sim = run(&["simulate", "--t-end", "0.5", "--seed", "4", "--out", d.to_str().unwrap()]);
    assert_eq!(sim.status.code(), Some(0));
    let csv = std::fs::read_dir(&d)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "csv"))
        .unwrap();
    let out = run(&["certify", "--trajectory", csv.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("fast_jump_violations"), "{text}");
    assert!(std::fs::read_dir(&d).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "svg")));
}

#[test]
fn reproduce_example_prints_table() {
    let out = run(&["reproduce-example"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("epsilon*") && text.contains("1.620000e-2"), "{text}");
}

#[test]
fn unknown_field_is_a_schema_error() {
    let d = tmp("schema");
    let p = write(&d, "bad.json", r#"{"builtin": "example", "colour": 3}"#);
    assert_eq!(run(&["design", "--scenario", &p]).status.code(), Some(2));
    let p = write(&d, "broken.json", "{ not json");
    assert_eq!(run(&["mati", "--scenario", &p]).status.code(), Some(2));
}

#[test]
fn missing_file_is_an_io_error() {
    assert_eq!(run(&["mati", "--scenario", "/nonexistent/scenario.json"]).status.code(), Some(1));
}

#[test]
fn infeasible_timing_is_a_constraint_error() {
    let d = tmp("constraint");
    let p = write(&d, "late.json", r#"{"builtin": "example", "clocks": {"miati_s": 0.3, "mati_s": 0.5}}"#);
    let out = run(&["design", "--scenario", &p]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oversized_step_is_a_numerical_error() {
    let out = run(&["simulate", "--t-end", "0.1", "--seed", "1", "--step", "0.01"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn explicit_scenario_matches_builtin() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/example_explicit.json");
    let explicit = run(&["design", "--scenario", path.to_str().unwrap()]);
    assert_eq!(explicit.status.code(), Some(0), "{}", String::from_utf8_lossy(&explicit.stderr));
    assert_eq!(json(&explicit)["certificate"], json(&run(&["design"]))["certificate"]);
}
