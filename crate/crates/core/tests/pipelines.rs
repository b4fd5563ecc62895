use eploop::harness::{disorder_run, DisorderConfig, RunConfig};
use eploop::loops::{
    evolve_simplified, evolve_simplified_prepared, loop1_schedule, optimize_schedule, run_table, schedule_objective,
    Direction, Engine, EvolveOptions, LoopShape, OptimizeConfig,
};
use eploop::metrics::{bell_state, BellLabel, DensityMatrix};
use eploop::optics::{compile_cn, parse_element_list, prepared_state, prepared_state_exact, ElementSequence};
use eploop::tomo::{bootstrap_error, reconstruct, simulate_counts, CountsTable, TomoConfig};
use eploop::walkops::WalkParams;

#[test]
fn prepared_state_skips_first_control_stage() {
    for dir in Direction::BOTH {
        let s = loop1_schedule(100, dir).unwrap();
        for l in BellLabel::ALL {
            let std = evolve_simplified(&s, &bell_state(l), EvolveOptions::default()).unwrap();
            let prep = prepared_state_exact(l, &s.steps[0]).unwrap();
            let skip = evolve_simplified_prepared(&s, &prep, EvolveOptions::default()).unwrap();
            assert!(std.output_state.max_abs_diff(&skip.output_state) < 1e-9);
            // Four-digit C₁⁻¹ lands on the same label.
            let coarse = evolve_simplified_prepared(&s, &prepared_state(l), EvolveOptions::default()).unwrap();
            assert_eq!(coarse.classified, std.classified);
        }
    }
}

#[test]
fn optimized_eight_step_loop_beats_equal_spacing() {
    let cfg = OptimizeConfig {
        restarts: 6,
        max_evals: 1500,
        ..OptimizeConfig::new(8)
    };
    let res = optimize_schedule(&cfg).unwrap();
    assert_eq!(res.phases.len(), 8);
    assert_eq!(res.phases[0], 0.0);
    assert!(res.objective >= res.initial_objective);
    assert!(res.objective > 0.8, "objective {}", res.objective);
    let again = schedule_objective(LoopShape::LOOP1, &res.phases, WalkParams::default(), Engine::Full);
    assert!((again - res.objective).abs() < 1e-12);
    assert!(optimize_schedule(&OptimizeConfig::new(1)).is_err());
}

#[test]
fn disorder_means_converge_with_more_groups() {
    let s = loop1_schedule(100, Direction::Cw).unwrap();
    let ten = DisorderConfig {
        groups: 10,
        seed: 3,
        ..Default::default()
    };
    let twenty = DisorderConfig { groups: 20, ..ten };
    let a = disorder_run(&s, &BellLabel::ALL, Engine::Full, &ten).unwrap();
    let b = disorder_run(&s, &BellLabel::ALL, Engine::Full, &twenty).unwrap();
    for (x, y) in a.cases.iter().zip(&b.cases) {
        // the first ten groups are shared
        assert_eq!(x.fidelities[..], y.fidelities[..10]);
        let bound = 2.0 * x.sd.max(y.sd) / (10f64).sqrt();
        assert!(
            (x.mean - y.mean).abs() < bound.max(1e-12),
            "{} {}: {} vs {}",
            x.direction,
            x.input,
            x.mean,
            y.mean
        );
    }
}

#[test]
fn input_subset_sees_same_draws() {
    let s = loop1_schedule(40, Direction::Cw).unwrap();
    let cfg = DisorderConfig {
        seed: 9,
        groups: 4,
        ..Default::default()
    };
    let all = disorder_run(&s, &BellLabel::ALL, Engine::Simplified, &cfg).unwrap();
    let one = disorder_run(&s, &[BellLabel::Zeta3], Engine::Simplified, &cfg).unwrap();
    assert_eq!(one.cases[0].fidelities, all.cases[2].fidelities);
    assert_eq!(one.cases[1].fidelities, all.cases[6].fidelities);
}

#[test]
fn counts_file_round_trip_reconstructs() {
    let reports = run_table(
        LoopShape::LOOP1,
        100,
        WalkParams::default(),
        "loop1",
        Engine::Full,
        EvolveOptions::default(),
    )
    .unwrap();
    let truth: &DensityMatrix = &reports[0].density;
    let cfg = TomoConfig {
        seed: 4,
        ..Default::default()
    };
    let counts = simulate_counts(truth, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("counts.csv");
    counts.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let back = CountsTable::read_csv(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(back, counts);
    let rho = reconstruct(&back, &cfg).unwrap();
    assert!(eploop::metrics::fidelity(truth, &rho).unwrap() > 0.98);
    let boot = bootstrap_error(&back, &cfg, 40).unwrap();
    let sd = boot.fidelity_sd[BellLabel::Zeta2.index()];
    assert!(sd > 0.0 && sd < 0.02, "sd {sd}");
}

#[test]
fn bootstrap_spread_shrinks_with_counts() {
    // 0.7·|ζ₁⟩⟨ζ₁| + 0.3·I/4 keeps every projector probability away from 0.
    let pure = DensityMatrix::from_pure(&bell_state(BellLabel::Zeta1));
    let mixed = pure.matrix().scale(eploop::smallmat::re(0.7))
        + DensityMatrix::maximally_mixed()
            .matrix()
            .scale(eploop::smallmat::re(0.3));
    let rho = DensityMatrix::new(mixed).unwrap();
    let sd = |n: u64| {
        let cfg = TomoConfig {
            counts_per_basis: n,
            seed: 2,
            ..Default::default()
        };
        bootstrap_error(&simulate_counts(&rho, &cfg).unwrap(), &cfg, 200)
            .unwrap()
            .fidelity_sd[0]
    };
    let ratio = sd(1_000) / sd(16_000);
    // Poisson scaling predicts 4.
    assert!((2.8..5.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn element_list_text_matches_compiled_sequence() {
    let cn = compile_cn().unwrap();
    let text = cn.sequence.to_element_list();
    let parsed = parse_element_list(&text).unwrap();
    let seq = ElementSequence {
        elements: parsed,
        ..cn.sequence.clone()
    };
    // six printed decimals on the PPBS transmittance
    assert!(seq.residual().unwrap() < 1e-5);
    assert!(parse_element_list("# only a comment\n\nHWP 0.1\nQWP x\n").is_err());
}

#[test]
fn run_config_builds_requested_schedules() {
    let cfg = RunConfig::from_json(r#"{"N": 6, "phases": [0, 1, 2, 3, 4, 5]}"#).unwrap();
    let s = cfg.schedule(Direction::Ccw).unwrap();
    assert_eq!(s.len(), 6);
    assert!((s.steps[0].theta1 + 0.6).abs() < 1e-12);
    assert!(RunConfig::from_json(r#"{"N": 6, "phases": [1, 2]}"#).is_err());
}
