use std::fs;

use eploop::harness::{reproduce_figure, Figure, RunConfig};
use serde_json::Value;

fn run(fig: Figure) -> (tempfile::TempDir, eploop::harness::FigureReport) {
    let dir = tempfile::tempdir().unwrap();
    let rep = reproduce_figure(fig, &RunConfig::default(), dir.path()).unwrap();
    (dir, rep)
}

#[test]
fn fig1b_surface_and_ep() {
    let (_dir, rep) = run(Figure::Fig1b);
    let csv = fs::read_to_string(&rep.files[0]).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("phi,theta1,re_lp,im_lp,re_lm,im_lm"));
    assert_eq!(lines.count(), 61 * 61);
    let ep = &rep.summary["ep"];
    assert!((ep["theta1"].as_f64().unwrap() + 0.29178).abs() < 1e-4);
    assert_eq!(ep["phi"].as_f64().unwrap(), 0.0);
}

#[test]
fn fig2_holds_twelve_density_matrices() {
    let (_dir, rep) = run(Figure::Fig2);
    let v: Value = serde_json::from_str(&fs::read_to_string(&rep.files[0]).unwrap()).unwrap();
    assert_eq!(v["N"], 100);
    let inputs = v["inputs"].as_array().unwrap();
    let outputs = v["outputs"].as_array().unwrap();
    assert_eq!(inputs.len() + outputs.len(), 12);
    for o in outputs {
        assert_eq!(o["density"].as_array().unwrap().len(), 32);
        assert_eq!(o["classified"], o["expected"]);
    }
    let cw1 = &outputs[0];
    assert_eq!(cw1["direction"], "cw");
    assert!((cw1["fidelity_expected"].as_f64().unwrap() - 0.983).abs() < 0.005);
    let csv = fs::read_to_string(&rep.files[1]).unwrap();
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn fig4_runs_tomography_at_eight_steps() {
    let (_dir, rep) = run(Figure::Fig4);
    let v = &rep.summary;
    assert_eq!(v["N"], 8);
    assert_eq!(v["engine"], "simplified");
    for o in v["outputs"].as_array().unwrap() {
        let t = &o["tomography"];
        assert!(t["similarity"].as_f64().unwrap() > 0.95);
        assert_eq!(t["density"].as_array().unwrap().len(), 32);
        assert!(t["fidelity_sd"][0].as_f64().unwrap() > 0.0);
    }
    let header = fs::read_to_string(&rep.files[1]).unwrap();
    assert!(header.starts_with("direction,input,classified,expected,f_expected"));
    assert!(header.lines().next().unwrap().ends_with("similarity,sd_expected"));
}

#[test]
fn fig5_has_eight_rows_with_on_and_off_columns() {
    let (_dir, rep) = run(Figure::Fig5);
    for path in &rep.files[..2] {
        let csv = fs::read_to_string(path).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("direction,input,reference,mean_on,sd_on,mean_off,sd_off")
        );
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 8);
        for r in rows {
            let cols: Vec<&str> = r.split(',').collect();
            assert_eq!(cols.len(), 7);
            for x in &cols[3..] {
                let v: f64 = x.parse().unwrap();
                assert!(v.is_finite() && v >= 0.0);
            }
        }
    }
}

#[test]
fn seed_changes_tomography_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = reproduce_figure(
        Figure::Fig4,
        &RunConfig {
            seed: 1,
            ..Default::default()
        },
        a.path(),
    )
    .unwrap();
    let rb = reproduce_figure(
        Figure::Fig4,
        &RunConfig {
            seed: 2,
            ..Default::default()
        },
        b.path(),
    )
    .unwrap();
    assert_ne!(fs::read(&ra.files[0]).unwrap(), fs::read(&rb.files[0]).unwrap());
}
