//! Reference methods: the deterministic primal-dual iteration, a plain
//! (anchor-free) stochastic iteration, and saddle-point oracles with a
//! probe-based certificate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::SamplingScheme;
use crate::geometry::{GeometryKind, LegendreGeometry, SimpleFunction};
use crate::problem::SaddleProblem;
use crate::solver::{estimated_step, Extrapolation, GradientRule, IterateState};
use crate::{Matrix, Vector};

/// Largest saddle-chain violation an oracle may report.
pub const ORACLE_TOLERANCE: f64 = 1e-8;

/// Number of random feasible probes used to certify an oracle.
pub const PROBE_COUNT: usize = 10_000;

const PROBE_SEED: u64 = 0x0dd5_eed5;

/// Step budget of the high-accuracy deterministic oracle.
const ORACLE_MAX_STEPS: usize = 2_000_000;

/// The deterministic oracle stops once successive iterates agree to this.
const ORACLE_STEP_TOLERANCE: f64 = 1e-15;

/// θ = 1 step with exact gradients z = ∇h(y), t = ∇ℓ(u).
pub fn deterministic_step(problem: &SaddleProblem, gamma: f64, state: &IterateState) -> Result<IterateState> {
    // The exact rule never draws, so any generator will do.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    estimated_step(problem, GradientRule::Exact, Extrapolation::On, gamma, state, &mut rng)
}

/// θ = 1 step with the single-term estimators ∇hᵢ(y), ∇ℓⱼ(u) under
/// uniform sampling and a caller-chosen step γ_k.
pub fn plain_sgd_step<R: Rng + ?Sized>(
    problem: &SaddleProblem,
    scheme: &SamplingScheme,
    gamma_k: f64,
    state: &IterateState,
    rng: &mut R,
) -> Result<IterateState> {
    if !scheme.is_uniform() {
        return Err(Error::Config("the plain stochastic baseline requires uniform sampling".into()));
    }
    estimated_step(problem, GradientRule::Plain { scheme }, Extrapolation::On, gamma_k, state, rng)
}

/// Iterates x_1..x_steps (and v) of the deterministic baseline.
pub fn deterministic_trajectory(
    problem: &SaddleProblem,
    gamma: f64,
    x0: &Vector,
    v0: &Vector,
    steps: usize,
) -> Result<Vec<IterateState>> {
    let mut state = IterateState::at(x0.clone(), v0.clone());
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        state = deterministic_step(problem, gamma, &state)?;
        out.push(state.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    /// Symmetric games with a uniform equilibrium, and unconstrained
    /// Euclidean quadratics via their linear optimality system.
    ClosedForm,
    /// Deterministic baseline iterated to a fixed point.
    HighAccuracyDeterministic,
}

/// A saddle point (x*, v*) together with its probe-certified residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleOracle {
    pub method: OracleMethod,
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    /// max over probes of max{G(x*, v*) − G(x, v*), G(x*, v) − G(x*, v*)}, floored at 0.
    pub residual: f64,
}

impl SaddleOracle {
    pub fn point(&self) -> (Vector, Vector) {
        (Vector::from_vec(self.primal.clone()), Vector::from_vec(self.dual.clone()))
    }
}

pub fn find_saddle(problem: &SaddleProblem, method: OracleMethod) -> Result<SaddleOracle> {
    let (x, v) = match method {
        OracleMethod::ClosedForm => closed_form(problem)?,
        OracleMethod::HighAccuracyDeterministic => iterate_to_fixed_point(problem)?,
    };
    let residual = probe_residual(problem, &x, &v, PROBE_COUNT, PROBE_SEED);
    if !(residual <= ORACLE_TOLERANCE) {
        return Err(Error::OracleFailure(format!(
            "saddle inequality violated by {residual:e} (tolerance {ORACLE_TOLERANCE:e})"
        )));
    }
    Ok(SaddleOracle {
        method,
        primal: x.iter().copied().collect(),
        dual: v.iter().copied().collect(),
        residual,
    })
}

/// Closed form where available, otherwise the deterministic fixed point.
pub fn find_saddle_auto(problem: &SaddleProblem) -> Result<SaddleOracle> {
    if supports_closed_form(problem) {
        find_saddle(problem, OracleMethod::ClosedForm)
    } else {
        find_saddle(problem, OracleMethod::HighAccuracyDeterministic)
    }
}

pub fn supports_closed_form(problem: &SaddleProblem) -> bool {
    is_uniform_game(problem) || is_euclidean_quadratic(problem)
}

/// A feasible interior starting point: uniform on simplices and for the
/// entropy geometry, the origin otherwise.
pub fn default_start(geometry: &LegendreGeometry, function: &SimpleFunction) -> Vector {
    let dim = geometry.dim();
    match (geometry.kind(), function) {
        (GeometryKind::NegativeEntropy, _) | (_, SimpleFunction::SimplexIndicator) => Vector::from_element(dim, 1.0 / dim as f64),
        (GeometryKind::Euclidean, _) => Vector::zeros(dim),
    }
}

fn closed_form(problem: &SaddleProblem) -> Result<(Vector, Vector)> {
    if is_uniform_game(problem) {
        let d = problem.primal_dim();
        let p = problem.dual_dim();
        return Ok((Vector::from_element(d, 1.0 / d as f64), Vector::from_element(p, 1.0 / p as f64)));
    }
    if is_euclidean_quadratic(problem) {
        return solve_optimality_system(problem);
    }
    Err(Error::OracleFailure(
        "no closed form: need a symmetric game or an unconstrained Euclidean quadratic".into(),
    ))
}

/// h = ℓ = 0, simplex constraints, and K·1/d, Kᵀ·1/p constant: every
/// strategy is a best response to the uniform one.
fn is_uniform_game(problem: &SaddleProblem) -> bool {
    if !(problem.h().is_zero() && problem.ell().is_zero()) {
        return false;
    }
    if *problem.f() != SimpleFunction::SimplexIndicator || *problem.g_star() != SimpleFunction::SimplexIndicator {
        return false;
    }
    let d = problem.primal_dim();
    let p = problem.dual_dim();
    let k = problem.coupling();
    let constant = |w: &Vector| w.iter().all(|&wi| (wi - w[0]).abs() <= 1e-12);
    constant(&k.apply(&Vector::from_element(d, 1.0 / d as f64)))
        && constant(&k.adjoint_apply(&Vector::from_element(p, 1.0 / p as f64)))
}

fn is_euclidean_quadratic(problem: &SaddleProblem) -> bool {
    let smooth = |f: &SimpleFunction| matches!(f, SimpleFunction::Zero | SimpleFunction::ScaledGeometry { .. });
    problem.primal_geometry().kind() == GeometryKind::Euclidean
        && problem.dual_geometry().kind() == GeometryKind::Euclidean
        && smooth(problem.f())
        && smooth(problem.g_star())
}

fn scaled_weight(f: &SimpleFunction) -> f64 {
    match *f {
        SimpleFunction::ScaledGeometry { weight } => weight,
        _ => 0.0,
    }
}

/// Solves ∇h(x) + μ_f x + Kᵀv = 0, ∇ℓ(v) + μ_g v − Kx = 0.
fn solve_optimality_system(problem: &SaddleProblem) -> Result<(Vector, Vector)> {
    let d = problem.primal_dim();
    let p = problem.dual_dim();
    let (hess_h, off_h) = problem.h().affine_gradient();
    let (hess_l, off_l) = problem.ell().affine_gradient();
    let k = problem.coupling().matrix();

    let mut system = Matrix::zeros(d + p, d + p);
    let mut rhs = Vector::zeros(d + p);
    system
        .view_mut((0, 0), (d, d))
        .copy_from(&(hess_h + Matrix::identity(d, d) * scaled_weight(problem.f())));
    system.view_mut((0, d), (d, p)).copy_from(&k.transpose());
    system.view_mut((d, 0), (p, d)).copy_from(&(-k));
    system
        .view_mut((d, d), (p, p))
        .copy_from(&(hess_l + Matrix::identity(p, p) * scaled_weight(problem.g_star())));
    rhs.rows_mut(0, d).copy_from(&(-off_h));
    rhs.rows_mut(d, p).copy_from(&(-off_l));

    let solution = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::OracleFailure("optimality system is singular".into()))?;
    Ok((solution.rows(0, d).into_owned(), solution.rows(d, p).into_owned()))
}

/// Runs the deterministic baseline until successive iterates stop moving.
fn iterate_to_fixed_point(problem: &SaddleProblem) -> Result<(Vector, Vector)> {
    if problem.primal_dim() > 100 || problem.dual_dim() > 100 {
        return Err(Error::OracleFailure("deterministic oracle is limited to d, p ≤ 100".into()));
    }
    // Admissible for the ergodic step conditions once the variance terms vanish.
    let scale = 4.0 * problem.mu0() + 2.0 * problem.coupling().norm();
    let gamma = if scale > 0.0 { 0.9 / scale } else { 1.0 };

    let x0 = default_start(problem.primal_geometry(), problem.f());
    let v0 = default_start(problem.dual_geometry(), problem.g_star());
    let mut state = IterateState::at(x0, v0);
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    for _ in 0..ORACLE_MAX_STEPS {
        let next = deterministic_step(problem, gamma, &state)?;
        let change = (&next.x - &state.x).amax().max((&next.v - &state.v).amax());
        if !change.is_finite() {
            return Err(Error::OracleFailure("deterministic iteration produced non-finite iterates".into()));
        }
        state = next;
        if change <= ORACLE_STEP_TOLERANCE {
            break;
        }
        // Round-off floor reached: no progress for a long stretch.
        if change < best {
            best = change;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 10_000 {
                break;
            }
        }
    }
    Ok((state.x, state.v))
}

/// Largest violation of G(x*, v) ≤ G(x*, v*) ≤ G(x, v*) over random feasible
/// probes, floored at zero.
pub fn probe_residual(problem: &SaddleProblem, x_star: &Vector, v_star: &Vector, probes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let x = probe_point(problem.primal_geometry(), problem.f(), x_star, &mut rng);
        let v = probe_point(problem.dual_geometry(), problem.g_star(), v_star, &mut rng);
        let primal = problem.primal_excess(&x, x_star, v_star);
        let dual = problem.dual_excess(&v, x_star, v_star);
        let violation = (-primal).max(-dual);
        if violation.is_nan() {
            return f64::INFINITY;
        }
        worst = worst.max(violation);
    }
    worst
}

/// A random feasible point at a log-uniform distance scale r ∈ [10⁻⁴, 1]
/// around `center`, so both local and global violations are searched.
fn probe_point<R: Rng + ?Sized>(
    geometry: &LegendreGeometry,
    function: &SimpleFunction,
    center: &Vector,
    rng: &mut R,
) -> Vector {
    let dim = center.len();
    let r = 10f64.powf(-4.0 * rng.random::<f64>());
    match function {
        SimpleFunction::SimplexIndicator => {
            // Dirichlet(1) via normalized exponentials; the convex mix stays in the simplex.
            let mut e = Vector::from_fn(dim, |_, _| -(1.0 - rng.random::<f64>()).ln());
            e /= e.sum();
            center * (1.0 - r) + e * r
        }
        SimpleFunction::BoxIndicator => {
            let u = Vector::from_fn(dim, |_, _| rng.random_range(-1.0..=1.0));
            center * (1.0 - r) + u * r
        }
        _ => match geometry.kind() {
            GeometryKind::NegativeEntropy => center.map(|c| {
                let base = if c > 0.0 { c } else { 1.0 / dim as f64 };
                base * (r * rng.random_range(-1.0..1.0f64)).exp()
            }),
            GeometryKind::Euclidean => {
                let scale = 1.0 + center.amax();
                center + Vector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)) * (r * scale)
            }
        },
    }
}
