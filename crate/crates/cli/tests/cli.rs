use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn eploop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eploop"))
        .args(args)
        .output()
        .expect("spawn eploop")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn find_ep_reports_coalescence_point() {
    let v = stdout_json(&eploop(&["find-ep"]));
    assert!((v["theta1"].as_f64().unwrap() + 0.291776).abs() < 1e-6);
    assert!(v["residual"].as_f64().unwrap() < 1e-10);
}

#[test]
fn evolve_csv_shows_chiral_switch() {
    let out = eploop(&["--format", "csv", "evolve", "--input", "zeta1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("cw,zeta1,zeta2,"));
    assert!(rows[1].starts_with("ccw,zeta1,zeta1,"));
}

#[test]
fn evolve_records_sheet_trace() {
    let v = stdout_json(&eploop(&[
        "evolve",
        "-n",
        "40",
        "--direction",
        "cw",
        "--input",
        "zeta3",
        "--record-steps",
        "--drift",
    ]));
    let case = &v["cases"][0];
    assert_eq!(case["steps"].as_array().unwrap().len(), 40);
    assert!(case["sheet"]["switches"].is_u64());
    assert!(v["control_drift"]["cw"].as_f64().unwrap() > 0.0);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"loop": "loop2", "N": 30, "engine": "simplified", "inputs": ["zeta4"]}"#,
    )
    .unwrap();
    let v = stdout_json(&eploop(&["--config", cfg.to_str().unwrap(), "evolve", "-n", "50"]));
    assert_eq!(v["config"]["N"], 50);
    let cases = v["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 2);
    // no chirality on the loop that misses the exceptional point
    assert_eq!(cases[0]["classified"], cases[1]["classified"]);
    assert_eq!(cases[0]["engine"], "simplified");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"N": 10, "unknown": true}"#).unwrap();
    assert_eq!(
        eploop(&["--config", cfg.to_str().unwrap(), "evolve"]).status.code(),
        Some(2)
    );
    assert_eq!(
        eploop(&["--config", "/nonexistent/run.json", "evolve"]).status.code(),
        Some(2)
    );
    assert_eq!(eploop(&["evolve", "-n", "1"]).status.code(), Some(2));
    assert_eq!(eploop(&["reproduce", "fig9"]).status.code(), Some(2));
    assert_eq!(eploop(&["disorder", "--strength", "-1"]).status.code(), Some(2));
    let threads = Command::new(env!("CARGO_BIN_EXE_eploop"))
        .arg("find-ep")
        .env("EPLOOP_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn numerical_guard_exits_with_three() {
    let out = eploop(&["find-ep", "--phi", "0.1", "0.2", "--theta1", "-0.5", "-0.4"]);
    assert_eq!(out.status.code(), Some(3));
    // a loop starting on the exceptional point has no control operator
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ep.json");
    let text = r#"{"loop": {"custom": {"radius": 0.1, "center_theta1": -0.19177605311466026}}, "N": 4, "engine": "simplified"}"#;
    fs::write(&cfg, text).unwrap();
    let out = eploop(&["--config", cfg.to_str().unwrap(), "evolve"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reproduce_is_deterministic_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = eploop(&["--seed", "5", "--out", d.path().to_str().unwrap(), "reproduce", "fig5"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["fig5_disorder.csv", "fig5_disorder_n100.csv", "fig5_summary.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn disorder_json_has_summary_statistics() {
    let v = stdout_json(&eploop(&[
        "disorder",
        "--groups",
        "4",
        "--granularity",
        "per-loop",
        "--direction",
        "ccw",
    ]));
    let cases = v["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 4);
    assert!(cases.iter().all(|c| c["direction"] == "ccw"));
    assert!(v["retention"].as_f64().unwrap() <= 1.0);
}

#[test]
fn tomo_reconstructs_written_counts() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    // ζ₁ = (|00⟩+|11⟩)/√2 at 1000 counts per basis setting
    let mut csv = String::from("basis_a,basis_b,count\n");
    let exact = [
        ("H", "H", 500),
        ("H", "V", 0),
        ("H", "D", 250),
        ("H", "R", 250),
        ("V", "H", 0),
        ("V", "V", 500),
        ("V", "D", 250),
        ("V", "R", 250),
        ("D", "H", 250),
        ("D", "V", 250),
        ("D", "D", 500),
        ("D", "R", 250),
        ("R", "H", 250),
        ("R", "V", 250),
        ("R", "D", 250),
        ("R", "R", 0),
    ];
    for (a, b, n) in exact {
        csv.push_str(&format!("{a},{b},{n}\n"));
    }
    fs::write(&counts, csv).unwrap();
    let v = stdout_json(&eploop(&[
        "tomo",
        "--counts",
        counts.to_str().unwrap(),
        "--bootstrap",
        "20",
    ]));
    assert!((v["fidelities"][0].as_f64().unwrap() - 1.0).abs() < 1e-9, "{v}");
    assert!(v["bootstrap"]["fidelity_sd"][0].as_f64().unwrap() > 0.0);
}

#[test]
fn tomo_simulates_loop_outputs() {
    let out = eploop(&["--format", "csv", "tomo", "--input", "zeta2", "--bootstrap", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    for row in text.lines().skip(1) {
        let sim: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert!(sim > 0.92, "{row}");
    }
}

#[test]
fn compile_optics_writes_element_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = eploop(&[
        "--format",
        "csv",
        "--out",
        dir.path().to_str().unwrap(),
        "compile-optics",
        "cn",
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("optics.csv")).unwrap();
    let parsed = eploop::optics::parse_element_list(&text).unwrap();
    assert!(parsed.iter().any(|p| p.to_string() == "CNOT"));
    let v = stdout_json(&eploop(&[
        "compile-optics",
        "gain-loss",
        "--transmittance",
        "1",
        "0.45",
    ]));
    assert!((v["gamma"].as_f64().unwrap() - 0.1996).abs() < 1e-4);
    let v = stdout_json(&eploop(&["compile-optics", "rotation", "-0.3"]));
    assert!(v["residual"].as_f64().unwrap() < 1e-12);
}

#[test]
fn surface_csv_honours_grid() {
    let out = eploop(&[
        "--format", "csv", "surface", "--phi", "-0.1", "0.1", "3", "--theta1", "-0.5", "-0.2", "4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 13);
}

#[test]
fn optimize_schedule_returns_phases() {
    let v = stdout_json(&eploop(&[
        "optimize-schedule",
        "-n",
        "6",
        "--restarts",
        "2",
        "--max-evals",
        "300",
    ]));
    let phases = v["phases"].as_array().unwrap();
    assert_eq!(phases.len(), 6);
    assert_eq!(phases[0], 0.0);
    assert!(v["objective"].as_f64().unwrap() >= v["initial_objective"].as_f64().unwrap());
}
