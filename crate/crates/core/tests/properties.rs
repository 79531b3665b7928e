use proptest::prelude::*;

use pdcert::certify::{
    bisect_rate, build_region_lmis, composite_block, lyapunov_decay_check, reference_printed_p,
};
use pdcert::cli::{parse_problem, problem_to_json};
use pdcert::flow::{
    grad_f, hrho, integrate, objective, reference_problem, Region, ThetaFlag, REFERENCE_LAMBDA_STAR,
    REFERENCE_X_STAR,
};
use pdcert::lyapunov::lyapunov_margin;
use pdcert::numerics::{is_hurwitz, lambda_max, lambda_min, DenseMatrix, SymMatrix};
use pdcert::sdp::{lyapunov_block, solve_lmi_feasibility, FeasibilityStatus, LmiProblem};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn point() -> impl Strategy<Value = [f64; 2]> {
    [-20.0..20.0f64, -20.0..20.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn objective_is_convex_with_lipschitz_gradient(x in point(), y in point(), t in 0.0..1.0f64) {
        let p = reference_problem();
        let z = [t * x[0] + (1.0 - t) * y[0], t * x[1] + (1.0 - t) * y[1]];
        let chord = t * objective(&p, &x) + (1.0 - t) * objective(&p, &y);
        prop_assert!(objective(&p, &z) <= chord + 1e-9 * (1.0 + chord.abs()));

        let (gx, gy) = (grad_f(&p, &x), grad_f(&p, &y));
        let dg = [gx[0] - gy[0], gx[1] - gy[1]];
        let dx = [x[0] - y[0], x[1] - y[1]];
        prop_assert!(norm(&dg) <= p.lipschitz() * norm(&dx) * (1.0 + 1e-12) + 1e-12);
        // Monotone gradient.
        prop_assert!(dg[0] * dx[0] + dg[1] * dx[1] >= -1e-9);
    }

    #[test]
    fn hrho_derivative_is_the_clipped_multiplier(
        u in -5.0..5.0f64, lam in -5.0..5.0f64, rho in 0.1..5.0f64,
    ) {
        let switch = -lam / rho;
        prop_assume!((u - switch).abs() > 1e-3);
        let h = 1e-6;
        let fd = (hrho(u + h, lam, rho) - hrho(u - h, lam, rho)) / (2.0 * h);
        let exact = (rho * u + lam).max(0.0);
        prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "{fd} vs {exact}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// `V = (z − z*)ᵀ P (z − z*)` with the printed matrix decays at least at
    /// `2·0.9·α` for α = 0.12 from arbitrary initial points.
    #[test]
    fn printed_pair_bounds_the_flow_energy(
        x0 in [-15.0..15.0f64, -15.0..15.0f64], lam0 in 0.0..5.0f64,
    ) {
        let p = reference_problem();
        let traj = integrate(&p, &x0, &[lam0], 5e-3, 25.0, 4).unwrap();
        let z_star = [REFERENCE_X_STAR[0], REFERENCE_X_STAR[1], REFERENCE_LAMBDA_STAR];
        let rate = 2.0 * 0.9 * 0.12;
        let check = lyapunov_decay_check(&traj, &z_star, &reference_printed_p(), rate, 0.1, 1e-8).unwrap();
        prop_assert!(check.passed(), "worst excess {:e}", check.worst_excess);
    }

    /// The composite block is affine in `θ`, so its largest eigenvalue at any
    /// interior point is bounded by the worst vertex.
    #[test]
    fn interior_blocks_are_dominated_by_vertices(
        upper in prop::collection::vec(-0.5..0.5f64, 6),
        alpha in 0.0..0.5f64,
        theta in 0.0..1.0f64,
    ) {
        let p = reference_problem();
        let lmis = build_region_lmis(&p).unwrap();
        let pm = SymMatrix::from_upper(3, &upper).unwrap().shift(2.0);
        for r in 0..lmis.region_count() {
            let eval = |th: f64| {
                let h = lmis.h_at(r, &[th]);
                lambda_max(&SymMatrix::from_dense(&composite_block(
                    &pm, &h, &lmis.b, &lmis.c, lmis.blocks[r].ell, alpha,
                ))).unwrap()
            };
            let worst = eval(0.0).max(eval(1.0));
            prop_assert!(eval(theta) <= worst + 1e-9);
        }
    }

    /// A `Feasible` answer is always a genuine Lyapunov matrix.
    #[test]
    fn sdp_feasible_answers_are_sound(
        entries in prop::collection::vec(-2.0..2.0f64, 9),
        shift in -1.0..2.5f64,
        seed in 0u64..1000,
    ) {
        let a = DenseMatrix::from_fn(3, 3, |i, j| entries[3 * i + j] - if i == j { shift } else { 0.0 });
        let prob = LmiProblem::new(3, vec![lyapunov_block(&a).unwrap()]);
        let out = solve_lmi_feasibility(&prob, 20_000, seed).unwrap();
        if let FeasibilityStatus::Feasible(pm) = &out.status {
            prop_assert!(is_hurwitz(&a));
            prop_assert!(lambda_min(pm).unwrap() > 0.0);
            prop_assert!(lyapunov_margin(pm, &a).unwrap() > 0.0);
        }
    }

    #[test]
    fn problem_files_roundtrip(
        rho in 0.1..10.0f64,
        b in -5.0..5.0f64,
        q in [-3.0..3.0f64, -3.0..3.0f64],
        diag in [0.0..4.0f64, 0.0..4.0f64],
        flags in prop::collection::vec(prop_oneof![
            Just(ThetaFlag::Active), Just(ThetaFlag::Inactive), Just(ThetaFlag::Free),
        ], 1..4),
    ) {
        let mut p = reference_problem();
        p.rho = rho;
        p.b = vec![b];
        p.lin = q.to_vec();
        p.quad = SymMatrix::diag(&diag);
        p.x_star = None;
        p.regions = flags
            .into_iter()
            .map(|f| Region { mu: 0.5, ell: 2.0, theta: vec![f], f: None })
            .collect();
        let text = problem_to_json(&p);
        match parse_problem(&text, "mem") {
            Ok((back, _)) => prop_assert_eq!(back, p),
            // Validation may legitimately reject a drawn combination; the
            // writer must then agree that the spec itself is invalid.
            Err(_) => prop_assert!(p.validate().is_err()),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn bisection_history_is_monotone(
        mu in 0.2..2.0f64, ratio in 1.0..4.0f64, hi in 0.05..3.0f64, tol_exp in 1..3i32,
    ) {
        let mut p = parse_problem(
            &std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/problems/unconstrained.json")).unwrap(),
            "unconstrained",
        ).unwrap().0;
        p.quad = SymMatrix::diag(&[mu]);
        p.regions = vec![Region { mu, ell: mu * ratio, theta: vec![], f: None }];
        let lmis = build_region_lmis(&p).unwrap();
        let cert = bisect_rate(&lmis, hi, 10f64.powi(-tol_exp)).unwrap();
        prop_assert!(cert.history_is_monotone(), "{:?}", cert.history);
        prop_assert!(cert.alpha >= 0.0);
        prop_assert!(lambda_min(&cert.p).unwrap() > 0.0);
    }
}
