//! Randomized invariants of the geometry, problem, estimator and certificate
//! layers.

use bregvr::certificates::{certify_linear_from, RateConstants};
use bregvr::geometry::{GeometryKind, LegendreGeometry, SimpleFunction};
use bregvr::problem::{CouplingOperator, FiniteSumSmooth, SaddleProblem, SmoothTerm};
use bregvr::{AnchorState, Matrix, SamplingMode, SamplingScheme, Vector, WeightSchedule};
use proptest::prelude::*;

fn simplex_point(raw: Vec<f64>) -> Vector {
    let v = Vector::from_vec(raw);
    &v / v.sum()
}

/// Interior points of the domain of each geometry.
fn geometry_points(dim: usize, count: usize) -> impl Strategy<Value = (GeometryKind, Vec<Vector>)> {
    prop_oneof![Just(GeometryKind::Euclidean), Just(GeometryKind::NegativeEntropy)].prop_flat_map(move |kind| {
        let point = match kind {
            GeometryKind::Euclidean => prop::collection::vec(-5.0..5.0f64, dim).prop_map(Vector::from_vec).boxed(),
            GeometryKind::NegativeEntropy => prop::collection::vec(1e-3..1.0f64, dim).prop_map(simplex_point).boxed(),
        };
        (Just(kind), prop::collection::vec(point, count))
    })
}

fn affine_term(dim: usize) -> impl Strategy<Value = SmoothTerm> {
    (1..4usize).prop_flat_map(move |rows| {
        (
            prop::collection::vec(-1.0..1.0f64, rows * dim),
            prop::collection::vec(-1.0..1.0f64, rows),
            prop::collection::vec(-0.5..0.5f64, dim),
        )
            .prop_map(move |(a, b, c)| SmoothTerm::AffineQuadratic {
                a: Matrix::from_row_slice(rows, dim, &a),
                b: Vector::from_vec(b),
                c: Vector::from_vec(c),
            })
    })
}

fn euclidean_problem(terms: Vec<SmoothTerm>, dual_terms: Vec<SmoothTerm>, k: Matrix) -> SaddleProblem {
    let d = k.ncols();
    let p = k.nrows();
    SaddleProblem::new(
        LegendreGeometry::euclidean(d),
        LegendreGeometry::euclidean(p),
        FiniteSumSmooth::new(terms).unwrap(),
        FiniteSumSmooth::new(dual_terms).unwrap(),
        SimpleFunction::ScaledGeometry { weight: 0.5 },
        SimpleFunction::L1Norm { weight: 0.2 },
        CouplingOperator::new(k, GeometryKind::Euclidean, GeometryKind::Euclidean).unwrap(),
    )
    .unwrap()
}

fn problem_strategy() -> impl Strategy<Value = SaddleProblem> {
    (2..6usize, 1..8usize, 1..8usize).prop_flat_map(|(dim, n, n_dual)| {
        (
            prop::collection::vec(affine_term(dim), n),
            prop::collection::vec(affine_term(dim), n_dual),
            prop::collection::vec(-1.0..1.0f64, dim * dim),
        )
            .prop_map(move |(h, ell, k)| euclidean_problem(h, ell, Matrix::from_row_slice(dim, dim, &k)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn three_point_identity((kind, pts) in geometry_points(6, 3)) {
        let geometry = LegendreGeometry::new(kind, 6);
        let (x, p, z) = (&pts[0], &pts[1], &pts[2]);
        let d = |a: &Vector, b: &Vector| geometry.bregman_distance(a, b).unwrap();
        let lhs = (x - p).dot(&(geometry.grad(z).unwrap() - geometry.grad(p).unwrap()));
        let rhs = d(x, p) + d(p, z) - d(x, z);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + d(x, z).abs()));
    }

    #[test]
    fn symmetric_identity((kind, pts) in geometry_points(6, 2)) {
        let geometry = LegendreGeometry::new(kind, 6);
        let (z, p) = (&pts[0], &pts[1]);
        let lhs = (z - p).dot(&(geometry.grad(z).unwrap() - geometry.grad(p).unwrap()));
        let rhs = geometry.bregman_distance(z, p).unwrap() + geometry.bregman_distance(p, z).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs));
    }

    #[test]
    fn bregman_dominates_half_squared_norm((kind, pts) in geometry_points(5, 2)) {
        let geometry = LegendreGeometry::new(kind, 5);
        let diff = &pts[0] - &pts[1];
        let half_sq = 0.5 * geometry.norm(&diff).powi(2);
        prop_assert!(geometry.bregman_distance(&pts[0], &pts[1]).unwrap() >= half_sq - 1e-12);
    }

    #[test]
    fn conjugate_inverts_gradient((kind, pts) in geometry_points(7, 1)) {
        let geometry = LegendreGeometry::new(kind, 7);
        let back = geometry.grad_conjugate(&geometry.grad(&pts[0]).unwrap()).unwrap();
        prop_assert!((back - &pts[0]).amax() <= 1e-12);
    }

    /// γf(x) ≥ γf(p) + ⟨∇φ(z) − γc − ∇φ(p), x − p⟩ for p = prox(∇φ(z) − γc).
    #[test]
    fn prox_satisfies_the_subgradient_inequality(
        (kind, pts) in geometry_points(5, 2),
        shift in prop::collection::vec(-2.0..2.0f64, 5),
        gamma in 0.01..3.0f64,
        choice in 0..4usize,
    ) {
        let geometry = LegendreGeometry::new(kind, 5);
        let function = match (kind, choice) {
            (GeometryKind::NegativeEntropy, c) if c % 2 == 0 => SimpleFunction::SimplexIndicator,
            (GeometryKind::NegativeEntropy, _) => SimpleFunction::Zero,
            (_, 0) => SimpleFunction::L1Norm { weight: 0.7 },
            (_, 1) => SimpleFunction::BoxIndicator,
            (_, 2) => SimpleFunction::SimplexIndicator,
            _ => SimpleFunction::ScaledGeometry { weight: 1.5 },
        };
        let w = geometry.grad(&pts[0]).unwrap() - Vector::from_vec(shift) * gamma;
        let p = geometry.mirror_prox(&function, gamma, &w).unwrap();
        let x = match function {
            SimpleFunction::SimplexIndicator => simplex_point(pts[1].map(|c| c.abs() + 1e-3).iter().copied().collect()),
            SimpleFunction::BoxIndicator => pts[1].map(|c| c.clamp(-1.0, 1.0)),
            _ => pts[1].clone(),
        };
        let gp = geometry.grad(&p).unwrap();
        let slack = gamma * function.difference(&geometry, &x, &p) - (&w - gp).dot(&(&x - &p));
        prop_assert!(slack >= -1e-9 * (1.0 + w.amax()), "slack {slack}");
    }

    #[test]
    fn estimators_are_unbiased(
        problem in problem_strategy(),
        seed in any::<u64>(),
        proportional in any::<bool>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mode = if proportional { SamplingMode::LipschitzProportional } else { SamplingMode::Uniform };
        let scheme = SamplingScheme::new(&problem, mode);
        let d = problem.primal_dim();
        let p = problem.dual_dim();
        let mut random = |len| Vector::from_fn(len, |_, _| rng.random_range(-2.0..2.0));
        let anchor = AnchorState::new(&problem, random(d), random(p)).unwrap();
        let (y, u) = (random(d), random(p));

        let mean_z = (0..problem.h().count())
            .fold(Vector::zeros(d), |acc, i| acc + scheme.estimate_primal(problem.h(), &anchor, &y, i) * scheme.q()[i]);
        let mean_t = (0..problem.ell().count())
            .fold(Vector::zeros(p), |acc, j| acc + scheme.estimate_dual(problem.ell(), &anchor, &u, j) * scheme.q_prime()[j]);
        let (gh, gl) = problem.full_gradients(&y, &u).unwrap();
        prop_assert!((mean_z - &gh).amax() <= 1e-12 * (1.0 + gh.amax()));
        prop_assert!((mean_t - &gl).amax() <= 1e-12 * (1.0 + gl.amax()));

        // At y = x̄ every draw returns the full gradient.
        let at_anchor = AnchorState::new(&problem, y.clone(), u.clone()).unwrap();
        for i in 0..problem.h().count() {
            prop_assert!((scheme.estimate_primal(problem.h(), &at_anchor, &y, i) - &gh).amax() <= 1e-12 * (1.0 + gh.amax()));
        }
    }

    #[test]
    fn gradients_match_finite_differences(term in affine_term(4), x in prop::collection::vec(-2.0..2.0f64, 4)) {
        let x = Vector::from_vec(x);
        let g = term.gradient(&x);
        let step = 1e-6;
        for k in 0..4 {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[k] += step;
            minus[k] -= step;
            let fd = (term.value(&plus) - term.value(&minus)) / (2.0 * step);
            prop_assert!((fd - g[k]).abs() <= 1e-5 * (1.0 + g[k].abs()));
        }
    }

    #[test]
    fn gap_function_is_convex_concave(
        problem in problem_strategy(),
        t in 0.0..1.0f64,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = problem.primal_dim();
        let p = problem.dual_dim();
        let mut random = |len| Vector::from_fn(len, |_, _| rng.random_range(-2.0..2.0));
        let (x1, x2, v1, v2) = (random(d), random(d), random(p), random(p));
        let xt = &x1 * t + &x2 * (1.0 - t);
        let vt = &v1 * t + &v2 * (1.0 - t);
        let g = |x: &Vector, v: &Vector| problem.gap(x, v);
        let scale = 1.0 + g(&x1, &v1).abs() + g(&x2, &v1).abs() + g(&x1, &v2).abs();
        prop_assert!(g(&xt, &v1) <= t * g(&x1, &v1) + (1.0 - t) * g(&x2, &v1) + 1e-9 * scale);
        prop_assert!(g(&x1, &vt) >= t * g(&x1, &v1) + (1.0 - t) * g(&x1, &v2) - 1e-9 * scale);
    }

    #[test]
    fn linear_certificate_invariants(
        l1 in 0.05..5.0f64,
        mu0 in 0.0..5.0f64,
        k_norm in 0.0..3.0f64,
        alpha in 0.1..4.0f64,
        fraction in 0.01..0.999f64,
    ) {
        let constants = RateConstants { l1, l2: l1 * l1, mu0, k_norm, alpha };
        let probe = certify_linear_from(&constants, 1e-9, None, None, None).unwrap();
        let gamma = fraction * probe.gamma_max;
        let cert = certify_linear_from(&constants, gamma, None, None, None).unwrap();
        prop_assert!(cert.gamma_ok);
        prop_assert!(cert.lambda > 1.0);
        let ratio = cert.lambda.ln() / cert.tau.ln();
        prop_assert!((cert.m_min - 1) as f64 <= ratio && ratio < cert.m_min as f64);
        let with_m = certify_linear_from(&constants, gamma, None, Some(cert.m_min), None).unwrap();
        prop_assert!(with_m.valid);
        let sum: f64 = with_m.weights.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert_eq!(with_m.weight_schedule(), WeightSchedule::GeometricAverage { tau: cert.tau });
    }
}
