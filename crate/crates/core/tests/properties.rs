use blindpoly::ambiguity::{apply_transform, pascal_matrix, pne, verify_pascal_identity, PascalTransform};
use blindpoly::jitter::{generate, JitterScenario};
use blindpoly::selection::{exhaustive_search, CandidateGrid};
use blindpoly::subspace::{gradient, objective, signal_subspace, solve_subspace, ScpConfig};
use blindpoly::vandermonde::{
    build_vandermonde, differentiation_matrix, ols_fit, synthesize_observations,
    CoefficientMatrix, ObservationMatrix, SampleLocations,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Sorted locations in [-3, 3] with pairwise gaps of at least `gap`.
fn spaced_locations(n: usize, gap: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, n + 1).prop_map(move |w| {
        let slack = 6.0 - gap * (n as f64 - 1.0);
        let total: f64 = w.iter().sum();
        let mut x = Vec::with_capacity(n);
        let mut acc = -3.0;
        for (i, wi) in w.iter().take(n).enumerate() {
            acc += slack * wi / total + if i > 0 { gap } else { 0.0 };
            x.push(acc);
        }
        x
    })
}

fn coefficients(k: usize, l: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0..2.0f64, k * l)
        .prop_map(move |v| DMatrix::from_column_slice(k, l, &v))
}

fn transform() -> impl Strategy<Value = PascalTransform> {
    (-3.0..3.0f64, 0.1..3.0f64, any::<bool>()).prop_map(|(t0, t1, neg)| {
        PascalTransform::new(t0, if neg { -t1 } else { t1 }).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vandermonde_columns_are_exact_products(
        x in prop::collection::vec(-3.0..3.0f64, 1..20),
        k in 1usize..7,
    ) {
        let v = build_vandermonde(&SampleLocations::new(x.clone()).unwrap(), k).unwrap();
        let m = v.as_matrix();
        for j in 1..k {
            for i in 0..x.len() {
                prop_assert_eq!(m[(i, j)].to_bits(), (m[(i, j - 1)] * x[i]).to_bits());
            }
        }
    }

    #[test]
    fn synthesize_then_fit_round_trips(
        (k, x, w) in (1usize..5).prop_flat_map(|k| {
            (Just(k), (k..12).prop_flat_map(|n| spaced_locations(n, 0.1)), coefficients(k, 3))
        }),
    ) {
        let x = SampleLocations::new(x).unwrap();
        let wm = CoefficientMatrix::new(w.clone()).unwrap();
        let y = synthesize_observations(&x, &wm).unwrap();
        let v = build_vandermonde(&x, k).unwrap();
        for l in 0..3 {
            let col: DVector<f64> = y.as_matrix().column(l).into_owned();
            let fit = ols_fit(&v, &col).unwrap();
            let truth = w.column(l);
            let err = (&fit - truth).norm() / truth.norm().max(1e-300);
            prop_assert!(err <= 1e-8 || truth.norm() == 0.0, "relative error {}", err);
        }
    }

    #[test]
    fn derivative_matrix_matches_monomials(
        x in prop::collection::vec(-3.0..3.0f64, 1..15),
        k in 1usize..7,
    ) {
        let v = build_vandermonde(&SampleLocations::new(x.clone()).unwrap(), k).unwrap();
        let vd = v.as_matrix() * differentiation_matrix(k);
        for (i, &xi) in x.iter().enumerate() {
            for j in 0..k {
                let expected = if j == 0 { 0.0 } else { j as f64 * xi.powi(j as i32 - 1) };
                prop_assert!((vd[(i, j)] - expected).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn pascal_identity_holds(
        x in prop::collection::vec(-3.0..3.0f64, 1..30),
        t in transform(),
        k in 1usize..7,
    ) {
        let x = SampleLocations::new(x).unwrap();
        prop_assert!(verify_pascal_identity(&x, &t, k) <= 1e-9);
    }

    #[test]
    fn pascal_matrices_compose(t in transform(), s in transform(), k in 1usize..7) {
        let prod = pascal_matrix(&t, k) * pascal_matrix(&s, k);
        let err = (prod - pascal_matrix(&t.then(&s), k)).amax();
        prop_assert!(err <= 1e-9, "error {}", err);
    }

    #[test]
    fn pne_is_affine_invariant(
        x in prop::collection::vec(-3.0..3.0f64, 5..30),
        noise in prop::collection::vec(-0.3..0.3f64, 30),
        t in transform(),
    ) {
        let n = x.len();
        let truth = SampleLocations::new(x.clone()).unwrap();
        let est = SampleLocations::new(x.iter().zip(&noise).map(|(a, b)| a + b).collect()).unwrap();
        let base = pne(&est, &truth, 6.0 / (n as f64 - 1.0)).unwrap();
        let moved = pne(&apply_transform(&t, &est), &truth, 6.0 / (n as f64 - 1.0)).unwrap();
        prop_assert!(base.value >= 0.0);
        prop_assert!((base.value - moved.value).abs() <= 1e-10);
        prop_assert!(pne(&truth, &truth, 1.0).unwrap().value == 0.0);
    }

    #[test]
    fn projector_invariants(
        (k, x, w) in (1usize..5).prop_flat_map(|k| {
            (Just(k), (k + 1..20).prop_flat_map(|n| spaced_locations(n, 0.05)), coefficients(k, k + 1))
        }),
    ) {
        let x = SampleLocations::new(x).unwrap();
        let y = synthesize_observations(&x, &CoefficientMatrix::new(w).unwrap()).unwrap();
        let Ok(s) = signal_subspace(&y, k) else { return Ok(()) };
        let u = s.basis();
        let p = s.projector();
        prop_assert!((u.transpose() * u - DMatrix::identity(k, k)).amax() <= 1e-12);
        prop_assert!((p * p - p).amax() <= 1e-12);
        prop_assert!((p - p.transpose()).amax() <= 1e-12);
        prop_assert!((p * u).amax() <= 1e-12);
    }

    #[test]
    fn ambiguity_orbit_is_flat(
        (k, x, w) in (2usize..5).prop_flat_map(|k| {
            (Just(k), spaced_locations(12, 0.1), coefficients(k, k))
        }),
        t in transform(),
    ) {
        let x = SampleLocations::new(x).unwrap();
        let y = synthesize_observations(&x, &CoefficientMatrix::new(w).unwrap()).unwrap();
        let Ok(s) = signal_subspace(&y, k) else { return Ok(()) };
        let moved = apply_transform(&t, &x);
        let scale = build_vandermonde(&moved, k).unwrap().as_matrix().norm_squared();
        prop_assert!(objective(s.projector(), moved.as_slice(), k) <= 1e-12 * scale);
    }

    #[test]
    fn gradient_matches_central_differences(
        n in 4usize..30,
        k in 1usize..5,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y = DMatrix::from_fn(n, k + 1, |_, _| rng.random_range(-1.0..1.0));
        let Ok(s) = signal_subspace(&ObservationMatrix::new(y).unwrap(), k) else { return Ok(()) };
        let p = s.projector();
        let g = gradient(p, &x, k);
        let h = 1e-6 * x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let fd = DVector::from_fn(n, |i, _| {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += h;
            b[i] -= h;
            (objective(p, &a, k) - objective(p, &b, k)) / (2.0 * h)
        });
        let scale = g.amax();
        if scale > 0.0 {
            prop_assert!((&g - &fd).amax() / scale <= 1e-5);
        } else {
            prop_assert!(fd.amax() <= 1e-8);
        }
    }

    #[test]
    fn exhaustive_search_never_worsens_with_more_candidates(
        grid in spaced_locations(9, 0.2),
        extra in -3.0..3.0f64,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let y = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
        let y = ObservationMatrix::new(y).unwrap();
        let small = exhaustive_search(&CandidateGrid::new(grid.clone()).unwrap(), &y, 2).unwrap();
        let mut bigger = grid.clone();
        if bigger.iter().all(|v| (v - extra).abs() > 1e-9) {
            bigger.push(extra);
        }
        bigger.sort_by(f64::total_cmp);
        let large = exhaustive_search(&CandidateGrid::new(bigger).unwrap(), &y, 2).unwrap();
        let tol = 1e-14 * y.as_matrix().norm_squared().max(1.0);
        prop_assert!(large.residual <= small.residual + tol);
    }
}

#[test]
fn scp_traces_never_increase() {
    for seed in 0..10 {
        let inst = generate(&JitterScenario::standard(20.0, 3, 3, seed)).unwrap();
        let mut cfg = ScpConfig::for_period(inst.period());
        cfg.max_iterations = 400;
        let rep = solve_subspace(&inst.y, &inst.uniform_locations, 3, &cfg).unwrap();
        assert!(rep.objective_trace.windows(2).all(|w| w[1] <= w[0]), "seed {seed}");
    }
}

#[test]
fn jitter_instances_are_reproducible() {
    for seed in 0..20 {
        let s = JitterScenario::standard(30.0, 4, 4, seed);
        let a = generate(&s).unwrap();
        let b = generate(&s).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }
}
