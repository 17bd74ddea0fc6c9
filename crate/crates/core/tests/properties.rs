use std::f64::consts::PI;

use nrdicke_core::compensate::pop_ratio;
use nrdicke_core::stability::{dyn_matrix_np, mu_nu_np_analytic};
use nrdicke_core::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn unit_vector() -> impl Strategy<Value = SpinVector> {
    (0.0..PI, 0.0..2.0 * PI).prop_map(|(theta, az)| {
        SpinVector::new(theta.sin() * az.cos(), theta.sin() * az.sin(), theta.cos())
    })
}

fn state() -> impl Strategy<Value = SystemState> {
    ([unit_vector(), unit_vector(), unit_vector()], -0.3..0.3, -0.3..0.3)
        .prop_map(|(spins, re, im)| SystemState { spins, cavity: Complex64::new(re, im) })
}

fn params() -> impl Strategy<Value = ModelParams> {
    (
        0.0..PI,
        0.0..0.2,
        [0.5..1.5f64, 0.5..1.5, 0.5..1.5],
        [0.0..80.0f64, 0.0..80.0, 0.0..80.0],
        [0.5..2.0f64, 0.5..2.0, 0.5..2.0],
    )
        .prop_map(|(phi, gamma, omega, lam, weight)| ModelParams {
            omega,
            lam,
            weight,
            ..ModelParams::benchmark(gamma, phi, 1.0)
        })
}

fn sign_flip(v: [f64; 11]) -> [f64; 11] {
    let mut out = v;
    for k in [0, 1, 3, 4, 6, 7, 9, 10] {
        out[k] = -out[k];
    }
    out
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) -> std::result::Result<(), TestCaseError> {
    for (x, y) in a.iter().zip(b) {
        prop_assert!((x - y).abs() <= tol, "{x} vs {y}");
    }
    Ok(())
}

fn image(rate: StateRate, op: SymmetryOp) -> [f64; 11] {
    apply_symmetry(&SystemState::from_full(&rate.to_full()), op).to_full()
}

proptest! {
    #[test]
    fn spin_length_is_conserved_by_both_vector_fields(st in state(), p in params()) {
        let d = rhs_full(&st, &p);
        for (s, ds) in st.spins.iter().zip(d.spins) {
            let rate = s.sx * ds[0] + s.sy * ds[1] + s.sz * ds[2];
            prop_assert!(rate.abs() < 1e-10, "{rate}");
        }
        for (s, ds) in st.spins.iter().zip(rhs_adiabatic(&st.spins, &p)) {
            let rate = s.sx * ds[0] + s.sy * ds[1] + s.sz * ds[2];
            prop_assert!(rate.abs() < 1e-10, "{rate}");
        }
    }

    #[test]
    fn parity_flips_the_rates(st in state(), p in params()) {
        let lhs = rhs_full(&apply_symmetry(&st, SymmetryOp::Z2Parity), &p).to_full();
        assert_close(&lhs, &sign_flip(rhs_full(&st, &p).to_full()), 1e-12)?;
    }

    #[test]
    fn mirror_maps_solutions_to_the_mirrored_model(st in state(), p in params()) {
        let lhs = rhs_full(&apply_symmetry(&st, SymmetryOp::SpeciesMirror), &p.mirrored()).to_full();
        assert_close(&lhs, &image(rhs_full(&st, &p), SymmetryOp::SpeciesMirror), 1e-12)?;
    }

    #[test]
    fn cyclic_shift_is_a_symmetry_at_two_thirds_pi(st in state(), gamma in 0.0..0.2, lam in 0.0..80.0) {
        let p = ModelParams::benchmark(gamma, 2.0 * PI / 3.0, lam);
        let lhs = rhs_full(&apply_symmetry(&st, SymmetryOp::Z3Cyclic), &p).to_full();
        assert_close(&lhs, &image(rhs_full(&st, &p), SymmetryOp::Z3Cyclic), 1e-12)?;
    }

    #[test]
    fn symmetries_keep_spins_on_the_sphere(st in state()) {
        for op in [SymmetryOp::Z2Parity, SymmetryOp::SpeciesMirror, SymmetryOp::Z3Cyclic] {
            let t = apply_symmetry(&st, op);
            prop_assert!(t.norm_defect() <= st.norm_defect() + 1e-15);
            prop_assert!((t.cavity.norm() - st.cavity.norm()).abs() < 1e-15);
        }
    }

    #[test]
    fn collective_coordinates_are_orthonormal(st in state()) {
        let c = collective_coords(&st.spins);
        let a: f64 = st.sx().iter().map(|x| x * x).sum();
        prop_assert!((c.xc * c.xc + c.xd1 * c.xd1 + c.xd2 * c.xd2 - a).abs() < 1e-12);
    }

    #[test]
    fn normal_phase_spectrum_matches_closed_form(phi in 0.0..PI, lam in 0.0..80.0, gamma in 0.0..0.2) {
        let p = ModelParams::benchmark(gamma, phi, lam);
        let num = dyn_matrix_np(&p).eigenvalues();
        for z in mu_nu_np_analytic(&p) {
            let d = num.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(d < 1e-8, "{z} off by {d}");
        }
    }

    #[test]
    fn perturbation_stays_small_and_on_the_sphere(mag in 1e-9..1e-2, seed in any::<u64>()) {
        let np = SystemState::normal();
        let k = perturb(&np, mag, seed);
        prop_assert!(k.norm_defect() < 1e-14);
        prop_assert!(k.distance(&np) <= 2.0 * mag);
    }

    #[test]
    fn population_ratio_is_even_about_quarter_turn(x in 0.0..1.5) {
        let a = pop_ratio(PI / 2.0 - x).unwrap();
        let b = pop_ratio(PI / 2.0 + x).unwrap();
        prop_assert!(a >= 1.0);
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn plan_equalizes_coupling_and_frequency_products(phi in 0.0..PI, big in 0.0..100.0) {
        prop_assume!((phi - PI / 2.0).abs() > 1e-3);
        let plan = make_plan(phi, big, true).unwrap();
        let p = params_from_plan(&plan, &ModelParams::benchmark(0.05, 0.0, 1.0));
        for s in p.source_coupling() {
            prop_assert!((s - big).abs() <= 1e-12 * big.max(1.0));
        }
        for i in 0..3 {
            prop_assert!((p.omega[i] * p.weight[i] - 1.0).abs() < 1e-12);
        }
        prop_assert_eq!(CompensationPlan::from_json(&plan.to_json()).unwrap(), plan);
    }

    #[test]
    fn grid_ranges_hit_both_ends(lo in -10.0..10.0, span in 0.0..10.0, n in 2usize..500) {
        let g = GridRange::new(lo, lo + span, n);
        let v = g.values();
        prop_assert_eq!(v.len(), n);
        prop_assert_eq!(v[0], lo);
        prop_assert_eq!(v[n - 1], lo + span);
        prop_assert!(v.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn phase_label_round_trips_through_json(tag in 0usize..5, deg in 0usize..7) {
        let l = PhaseLabel::new(PhaseTag::ALL[tag], deg);
        let s = serde_json::to_string(&l).unwrap();
        prop_assert_eq!(serde_json::from_str::<PhaseLabel>(&s).unwrap(), l);
    }
}
