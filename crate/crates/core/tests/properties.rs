use std::f64::consts::PI;

use eploop::harness::{disorder_run, DisorderConfig, Granularity};
use eploop::loops::{evolve, loop_schedule, Direction, Engine, EvolveOptions, LoopShape};
use eploop::metrics::{bell_state, classify, fidelity, BellLabel, DensityMatrix};
use eploop::optics::{
    compile_phase_shift, compile_rotation, compile_symmetry_break, compile_walk_operator, gamma_from_transmittance,
    hwp, qwp, transmittance_from_gamma,
};
use eploop::smallmat::{c, cis, hermitian_eig4, inverse4, kron, psd_sqrt, re, CMat2, CMat4, CVec4, ONE};
use eploop::spectrum::{eigensystem, quasienergy};
use eploop::tomo::{exact_probabilities, reconstruct_frequencies, Projection};
use eploop::walkops::{
    control_operator, d_coefficients, product_step, u_step, walk_operator_closed, walk_operator_product, WalkParams,
};
use proptest::prelude::*;

fn angle() -> impl Strategy<Value = f64> {
    -PI..PI
}

fn params() -> impl Strategy<Value = WalkParams> {
    (angle(), angle(), angle(), -1.0..1.0f64, angle()).prop_map(|(theta1, theta2, phi, gamma, k)| WalkParams {
        theta1,
        theta2,
        phi,
        gamma,
        k,
    })
}

fn cplx() -> impl Strategy<Value = eploop::smallmat::C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| c(a, b))
}

fn mat2() -> impl Strategy<Value = CMat2> {
    prop::array::uniform4(cplx()).prop_map(|v| CMat2::new([[v[0], v[1]], [v[2], v[3]]]))
}

fn mat4() -> impl Strategy<Value = CMat4> {
    prop::array::uniform16(cplx()).prop_map(|v| CMat4(std::array::from_fn(|i| std::array::from_fn(|j| v[4 * i + j]))))
}

fn state() -> impl Strategy<Value = CVec4> {
    prop::array::uniform4(cplx())
        .prop_filter("non-zero", |v| CVec4(*v).norm() > 1e-3)
        .prop_map(|v| CVec4(v).normalized())
}

fn density() -> impl Strategy<Value = DensityMatrix> {
    (prop::array::uniform4(state()), prop::array::uniform4(0.01..1.0f64)).prop_map(|(vs, ws)| {
        let total: f64 = ws.iter().sum();
        let mut m = CMat4::zeros();
        for (v, w) in vs.iter().zip(ws) {
            m = m + v.outer(v).scale(re(w / total));
        }
        DensityMatrix::new(m.hermitian_part()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kron_mixed_product(a in mat2(), b in mat2(), c2 in mat2(), d in mat2()) {
        let lhs = kron(&a, &b) * kron(&c2, &d);
        let rhs = kron(&(a * c2), &(b * d));
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn inverse_round_trip(m in mat4()) {
        if let Ok(inv) = inverse4(&m) {
            let scale = m.max_abs() * inv.max_abs();
            prop_assert!((m * inv).max_abs_diff(&CMat4::identity()) < 1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn hermitian_eigendecomposition(m in mat4()) {
        let h = (m + m.dagger()).scale(re(0.5));
        let eig = hermitian_eig4(&h).unwrap();
        prop_assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        let mut back = CMat4::zeros();
        for (v, vec) in eig.values.iter().zip(eig.vectors.iter()) {
            back = back + vec.outer(vec).scale(re(*v));
        }
        prop_assert!(back.max_abs_diff(&h) < 1e-10);
    }

    #[test]
    fn psd_sqrt_squares_back(rho in density()) {
        let s = psd_sqrt(rho.matrix()).unwrap();
        prop_assert!((s * s).max_abs_diff(rho.matrix()) < 1e-10);
    }

    #[test]
    fn coin_closed_form(p in params()) {
        let m = walk_operator_product(&p);
        prop_assert!(m.max_abs_diff(&walk_operator_closed(&p)) < 1e-12);
        prop_assert!((m.det() - ONE).norm() < 1e-12);
        let d = d_coefficients(&p);
        prop_assert!((d.real_identity() - 1.0).abs() < 1e-12);
        let (em, ep) = d.eta_pair();
        prop_assert!((em * ep - ONE).norm() < 1e-12);
    }

    #[test]
    fn u_step_similar_to_product_step(p in params()) {
        let a = u_step(&p).char_poly();
        let b = product_step(&p).char_poly();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).norm() < 1e-10);
        }
        if let Ok(ctl) = control_operator(&p) {
            let rec = ctl.c * product_step(&p) * ctl.c_inv;
            prop_assert!(rec.max_abs_diff(&u_step(&p)) < 1e-8);
        }
    }

    #[test]
    fn gain_sheet_sign(p in params()) {
        let (em, ep) = d_coefficients(&p).eta_pair();
        let (lp, lm) = quasienergy(&p);
        for (lam, eta) in [(lp, ep), (lm, em)] {
            if (eta.norm() - 1.0).abs() > 1e-9 {
                prop_assert_eq!(lam.im > 0.0, eta.norm() > 1.0);
            }
        }
    }

    #[test]
    fn biorthonormal_eigenvectors(p in params()) {
        if let Ok(es) = eigensystem(&p) {
            for i in 0..4 {
                for j in 0..4 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((es.beta[i].pair(&es.alpha[j]) - re(want)).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn fidelity_symmetric_and_bounded(a in density(), b in density()) {
        let fab = fidelity(&a, &b).unwrap();
        prop_assert!((fab - fidelity(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert!((0.0..=1.0 + 1e-9).contains(&fab));
    }

    #[test]
    fn classification_ignores_global_phase(psi in state(), t in angle()) {
        prop_assert_eq!(classify(&psi).label, classify(&psi.scale(cis(t))).label);
    }

    #[test]
    fn tomography_inverts_exact_probabilities(rho in density()) {
        let back = reconstruct_frequencies(&exact_probabilities(&rho), false, Projection::Clip).unwrap();
        prop_assert!(back.matrix().max_abs_diff(rho.matrix()) < 1e-10);
    }

    #[test]
    fn waveplate_powers(t in angle()) {
        prop_assert!((hwp(t) * hwp(t)).max_abs_diff(&CMat2::identity()) < 1e-12);
        let q = qwp(t);
        prop_assert!((q * q * q * q).max_abs_diff(&CMat2::identity().scale(-ONE)) < 1e-12);
    }

    #[test]
    fn compiled_coin_factors_verify(t in angle()) {
        for seq in [compile_rotation(t), compile_phase_shift(t), compile_symmetry_break(t)] {
            prop_assert!(seq.residual().unwrap() < 1e-10);
        }
    }

    #[test]
    fn compiled_coin_chain_verifies(p in params()) {
        let seq = compile_walk_operator(&p).unwrap();
        prop_assert!(seq.scale > 0.0);
        prop_assert!(seq.residual().unwrap() < 1e-9);
    }

    #[test]
    fn gamma_round_trip(t2 in 0.01..1.0f64) {
        let g = gamma_from_transmittance(1.0, t2).unwrap();
        let (a, b) = transmittance_from_gamma(g).unwrap();
        prop_assert!((gamma_from_transmittance(a, b).unwrap() - g).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn renormalization_only_changes_magnitude(n in 2usize..40, l in 0usize..4, cw in any::<bool>()) {
        let dir = if cw { Direction::Cw } else { Direction::Ccw };
        let s = loop_schedule(LoopShape::LOOP1, n, dir, WalkParams::default(), "p").unwrap();
        let psi = bell_state(BellLabel::ALL[l]);
        let a = evolve(&s, &psi, Engine::Full, EvolveOptions { record_steps: false, renormalize: true }).unwrap();
        let b = evolve(&s, &psi, Engine::Full, EvolveOptions { record_steps: false, renormalize: false }).unwrap();
        prop_assert!(a.output_state.max_abs_diff(&b.output_state) < 1e-9);
        prop_assert!((a.log_magnitude - b.log_magnitude).abs() < 1e-9);
    }

    #[test]
    fn hermitian_walk_preserves_norm(n in 2usize..30, psi in state()) {
        let base = WalkParams { gamma: 0.0, ..Default::default() };
        let s = loop_schedule(LoopShape::LOOP1, n, Direction::Cw, base, "h").unwrap();
        let r = evolve(&s, &psi, Engine::Full, EvolveOptions { record_steps: false, renormalize: false }).unwrap();
        prop_assert!(r.log_magnitude.abs() < 1e-10);
    }

    #[test]
    fn zero_disorder_is_exact(seed in any::<u64>(), per_loop in any::<bool>()) {
        let s = loop_schedule(LoopShape::LOOP1, 12, Direction::Cw, WalkParams::default(), "d").unwrap();
        let granularity = if per_loop { Granularity::PerLoop } else { Granularity::PerStep };
        let cfg = DisorderConfig { strength: 0.0, groups: 2, seed, granularity };
        let sum = disorder_run(&s, &[BellLabel::Zeta1, BellLabel::Zeta4], Engine::Full, &cfg).unwrap();
        for c in &sum.cases {
            prop_assert_eq!(c.mean, c.unperturbed);
            prop_assert_eq!(c.sd, 0.0);
        }
    }
}
