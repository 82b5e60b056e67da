//! The saddle problem min_x max_v G(x, v) with
//! G(x, v) = h(x) + f(x) + ⟨Kx, v⟩ − g*(v) − ℓ(v),
//! where h and ℓ are finite sums of smooth convex terms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{GeometryKind, LegendreGeometry, SimpleFunction};
use crate::{Matrix, Vector};

/// Tolerance below zero tolerated by [`SaddleProblem::gap_pair`].
pub const NEGATIVE_GAP_TOLERANCE: f64 = 1e-9;

/// Relative slack when checking a declared Lipschitz constant against the
/// power-iteration estimate of ‖A‖².
const LIPSCHITZ_CHECK_TOLERANCE: f64 = 1e-6;

/// Largest singular value of `matrix`, by power iteration on AᵀA.
pub fn spectral_norm(matrix: &Matrix) -> f64 {
    if matrix.nrows() == 0 || matrix.ncols() == 0 || matrix.amax() == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = Vector::from_fn(matrix.ncols(), |_, _| rng.random::<f64>() + 0.5);
    x /= x.norm();
    let mut estimate = 0.0;
    for _ in 0..20_000 {
        let y = matrix.tr_mul(&(matrix * &x));
        let next = y.norm();
        if next == 0.0 {
            break;
        }
        x = y / next;
        let converged = (next - estimate).abs() <= 1e-15 * next;
        estimate = next;
        if converged {
            break;
        }
    }
    // Rayleigh quotient of the converged vector.
    (matrix * &x).norm()
}

/// One smooth convex summand of h or ℓ.
#[derive(Debug, Clone, PartialEq)]
pub enum SmoothTerm {
    Zero { dim: usize },
    /// ⟨c, x⟩
    Linear { c: Vector },
    /// ½‖Ax − b‖² + ⟨c, x⟩
    AffineQuadratic { a: Matrix, b: Vector, c: Vector },
}

impl SmoothTerm {
    pub fn dim(&self) -> usize {
        match self {
            SmoothTerm::Zero { dim } => *dim,
            SmoothTerm::Linear { c } => c.len(),
            SmoothTerm::AffineQuadratic { a, .. } => a.ncols(),
        }
    }

    fn validate(&self) -> Result<()> {
        if let SmoothTerm::AffineQuadratic { a, b, c } = self {
            if a.nrows() != b.len() || a.ncols() != c.len() {
                return Err(Error::Dimension(format!(
                    "affine-quadratic term: A is {}x{}, b has {}, c has {}",
                    a.nrows(),
                    a.ncols(),
                    b.len(),
                    c.len()
                )));
            }
        }
        Ok(())
    }

    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            SmoothTerm::Zero { .. } => 0.0,
            SmoothTerm::Linear { c } => c.dot(x),
            SmoothTerm::AffineQuadratic { a, b, c } => 0.5 * (a * x - b).norm_squared() + c.dot(x),
        }
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        match self {
            SmoothTerm::Zero { dim } => Vector::zeros(*dim),
            SmoothTerm::Linear { c } => c.clone(),
            SmoothTerm::AffineQuadratic { a, b, c } => a.tr_mul(&(a * x - b)) + c,
        }
    }

    /// value(x) − value(y) without forming the two values separately.
    pub fn difference(&self, x: &Vector, y: &Vector) -> f64 {
        let delta = x - y;
        match self {
            SmoothTerm::Zero { .. } => 0.0,
            SmoothTerm::Linear { c } => c.dot(&delta),
            SmoothTerm::AffineQuadratic { a, b, c } => {
                let a_delta = a * &delta;
                0.5 * a_delta.norm_squared() + a_delta.dot(&(a * y - b)) + c.dot(&delta)
            }
        }
    }

    /// Gradient Lipschitz bound ‖A‖² (zero for affine terms).
    pub fn smoothness_bound(&self) -> f64 {
        match self {
            SmoothTerm::AffineQuadratic { a, .. } => spectral_norm(a).powi(2),
            _ => 0.0,
        }
    }

    /// Hessian (constant for every supported kind).
    pub fn hessian(&self) -> Matrix {
        match self {
            SmoothTerm::AffineQuadratic { a, .. } => a.tr_mul(a),
            other => Matrix::zeros(other.dim(), other.dim()),
        }
    }

    /// Constant part r of the affine gradient ∇(x) = Hx + r.
    pub fn gradient_offset(&self) -> Vector {
        match self {
            SmoothTerm::Zero { dim } => Vector::zeros(*dim),
            SmoothTerm::Linear { c } => c.clone(),
            SmoothTerm::AffineQuadratic { a, b, c } => c - a.tr_mul(b),
        }
    }
}

/// (1/n) Σᵢ hᵢ together with per-term gradient Lipschitz constants.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSumSmooth {
    terms: Vec<SmoothTerm>,
    lipschitz: Vec<f64>,
    dim: usize,
}

impl FiniteSumSmooth {
    /// Builds the sum with Lipschitz constants computed from the terms.
    pub fn new(terms: Vec<SmoothTerm>) -> Result<Self> {
        let lipschitz = terms.iter().map(SmoothTerm::smoothness_bound).collect();
        Self::with_lipschitz(terms, lipschitz)
    }

    /// Builds the sum with user-declared constants, checked against ‖Aᵢ‖².
    pub fn with_lipschitz(terms: Vec<SmoothTerm>, lipschitz: Vec<f64>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("a finite sum needs at least one term".into()));
        }
        if terms.len() != lipschitz.len() {
            return Err(Error::Dimension(format!(
                "{} terms but {} Lipschitz constants",
                terms.len(),
                lipschitz.len()
            )));
        }
        let dim = terms[0].dim();
        for (i, (term, &l)) in terms.iter().zip(lipschitz.iter()).enumerate() {
            term.validate()?;
            if term.dim() != dim {
                return Err(Error::Dimension(format!(
                    "term {i} acts on dimension {}, expected {dim}",
                    term.dim()
                )));
            }
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::Config(format!("Lipschitz constant of term {i} is {l}")));
            }
            let bound = term.smoothness_bound();
            if l < bound * (1.0 - LIPSCHITZ_CHECK_TOLERANCE) {
                return Err(Error::Config(format!(
                    "Lipschitz constant {l} of term {i} is below ‖A‖² = {bound}"
                )));
            }
        }
        Ok(Self { terms, lipschitz, dim })
    }

    /// ℓ = 0 as a single zero term with ν₁ = 0.
    pub fn zero(dim: usize) -> Self {
        Self {
            terms: vec![SmoothTerm::Zero { dim }],
            lipschitz: vec![0.0],
            dim,
        }
    }

    pub fn count(&self) -> usize {
        self.terms.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[SmoothTerm] {
        &self.terms
    }

    pub fn term(&self, index: usize) -> &SmoothTerm {
        &self.terms[index]
    }

    pub fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    /// μ = (1/n) Σ μᵢ.
    pub fn mean_lipschitz(&self) -> f64 {
        self.lipschitz.iter().sum::<f64>() / self.count() as f64
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| matches!(t, SmoothTerm::Zero { .. }))
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.terms.iter().map(|t| t.value(x)).sum::<f64>() / self.count() as f64
    }

    pub fn difference(&self, x: &Vector, y: &Vector) -> f64 {
        self.terms.iter().map(|t| t.difference(x, y)).sum::<f64>() / self.count() as f64
    }

    pub fn term_gradient(&self, index: usize, x: &Vector) -> Vector {
        self.terms[index].gradient(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        let mut total = Vector::zeros(self.dim);
        for term in &self.terms {
            total += term.gradient(x);
        }
        total / self.count() as f64
    }

    /// Averaged Hessian and gradient offset: ∇(x) = Hx + r.
    pub fn affine_gradient(&self) -> (Matrix, Vector) {
        let n = self.count() as f64;
        let mut hessian = Matrix::zeros(self.dim, self.dim);
        let mut offset = Vector::zeros(self.dim);
        for term in &self.terms {
            hessian += term.hessian();
            offset += term.gradient_offset();
        }
        (hessian / n, offset / n)
    }
}

/// The coupling operator K: ℝᵈ → ℝᵖ with its operator norm in the norms the
/// two geometries are strongly convex in.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingOperator {
    matrix: Matrix,
    norm: f64,
}

impl CouplingOperator {
    pub fn new(matrix: Matrix, primal: GeometryKind, dual: GeometryKind) -> Result<Self> {
        if matrix.iter().any(|k| !k.is_finite()) {
            return Err(Error::Config("coupling matrix has non-finite entries".into()));
        }
        let norm = match (primal, dual) {
            (GeometryKind::Euclidean, GeometryKind::Euclidean) => spectral_norm(&matrix),
            (GeometryKind::NegativeEntropy, GeometryKind::NegativeEntropy) => matrix.amax(),
            // sup over the ℓ1 ball is attained at a vertex: max column norm.
            (GeometryKind::NegativeEntropy, GeometryKind::Euclidean) => matrix
                .column_iter()
                .map(|c| c.norm())
                .fold(0.0, f64::max),
            (GeometryKind::Euclidean, GeometryKind::NegativeEntropy) => {
                matrix.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
            }
        };
        let operator = Self { matrix, norm };
        let probe = operator.probe_norm(primal, dual, 100, 0xc0ffee);
        if probe > norm * (1.0 + 1e-9) + 1e-300 {
            return Err(Error::Config(format!(
                "operator norm {norm} is below probed ratio {probe}"
            )));
        }
        Ok(operator)
    }

    /// Largest ‖Kx‖_* / ‖x‖ over `samples` random directions.
    pub fn probe_norm(&self, primal: GeometryKind, dual: GeometryKind, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let primal_geometry = LegendreGeometry::new(primal, self.matrix.ncols());
        let dual_geometry = LegendreGeometry::new(dual, self.matrix.nrows());
        (0..samples)
            .map(|_| {
                let x = Vector::from_fn(self.matrix.ncols(), |_, _| 2.0 * rng.random::<f64>() - 1.0);
                let size = primal_geometry.norm(&x);
                if size == 0.0 {
                    0.0
                } else {
                    dual_geometry.dual_norm(&self.apply(&x)) / size
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        &self.matrix * x
    }

    pub fn adjoint_apply(&self, v: &Vector) -> Vector {
        self.matrix.tr_mul(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleProblem {
    primal_geometry: LegendreGeometry,
    dual_geometry: LegendreGeometry,
    h: FiniteSumSmooth,
    ell: FiniteSumSmooth,
    f: SimpleFunction,
    g_star: SimpleFunction,
    coupling: CouplingOperator,
    mu0: f64,
    alpha: f64,
}

impl SaddleProblem {
    pub fn new(
        primal_geometry: LegendreGeometry,
        dual_geometry: LegendreGeometry,
        h: FiniteSumSmooth,
        ell: FiniteSumSmooth,
        f: SimpleFunction,
        g_star: SimpleFunction,
        coupling: CouplingOperator,
    ) -> Result<Self> {
        let d = primal_geometry.dim();
        let p = dual_geometry.dim();
        if h.dim() != d || ell.dim() != p || coupling.cols() != d || coupling.rows() != p {
            return Err(Error::Dimension(format!(
                "d = {d}, p = {p}, but h acts on {}, ℓ on {}, and K is {}x{}",
                h.dim(),
                ell.dim(),
                coupling.rows(),
                coupling.cols()
            )));
        }
        f.validate()?;
        g_star.validate()?;
        let mu0 = h.mean_lipschitz().max(ell.mean_lipschitz());
        let alpha = f
            .relative_strong_convexity()
            .min(g_star.relative_strong_convexity());
        Ok(Self {
            primal_geometry,
            dual_geometry,
            h,
            ell,
            f,
            g_star,
            coupling,
            mu0,
            alpha,
        })
    }

    pub fn primal_geometry(&self) -> &LegendreGeometry {
        &self.primal_geometry
    }

    pub fn dual_geometry(&self) -> &LegendreGeometry {
        &self.dual_geometry
    }

    pub fn h(&self) -> &FiniteSumSmooth {
        &self.h
    }

    pub fn ell(&self) -> &FiniteSumSmooth {
        &self.ell
    }

    pub fn f(&self) -> &SimpleFunction {
        &self.f
    }

    pub fn g_star(&self) -> &SimpleFunction {
        &self.g_star
    }

    pub fn coupling(&self) -> &CouplingOperator {
        &self.coupling
    }

    /// max{μ, ν} of the mean term Lipschitz constants.
    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    /// Common relative strong convexity of f and g* (the smaller of the two).
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn primal_dim(&self) -> usize {
        self.primal_geometry.dim()
    }

    pub fn dual_dim(&self) -> usize {
        self.dual_geometry.dim()
    }

    /// G(x, v), with +∞ for infeasible x and −∞ for infeasible v.
    pub fn gap(&self, x: &Vector, v: &Vector) -> f64 {
        let fx = self.f.evaluate(&self.primal_geometry, x);
        if fx == f64::INFINITY {
            return f64::INFINITY;
        }
        let gv = self.g_star.evaluate(&self.dual_geometry, v);
        if gv == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        self.h.value(x) + fx + self.coupling.apply(x).dot(v) - gv - self.ell.value(v)
    }

    /// G(x, v*) − G(x*, v*), evaluated in difference form.
    pub fn primal_excess(&self, x: &Vector, x_star: &Vector, v_star: &Vector) -> f64 {
        let f_diff = self.f.difference(&self.primal_geometry, x, x_star);
        if f_diff.is_infinite() {
            return f_diff;
        }
        self.h.difference(x, x_star) + f_diff + self.coupling.apply(&(x - x_star)).dot(v_star)
    }

    /// G(x*, v*) − G(x*, v), evaluated in difference form.
    pub fn dual_excess(&self, v: &Vector, x_star: &Vector, v_star: &Vector) -> f64 {
        let g_diff = self.g_star.difference(&self.dual_geometry, v, v_star);
        if g_diff.is_infinite() {
            return g_diff;
        }
        g_diff + self.ell.difference(v, v_star) - self.coupling.apply(x_star).dot(&(v - v_star))
    }

    /// G(x, v*) − G(x*, v) for a saddle point (x*, v*).
    pub fn gap_pair(&self, x: &Vector, v: &Vector, x_star: &Vector, v_star: &Vector) -> Result<f64> {
        let primal = self.primal_excess(x, x_star, v_star);
        let dual = self.dual_excess(v, x_star, v_star);
        let total = if primal == f64::INFINITY || dual == f64::INFINITY {
            f64::INFINITY
        } else {
            primal + dual
        };
        if total.is_nan() || total < -NEGATIVE_GAP_TOLERANCE {
            return Err(Error::NegativeGap(total));
        }
        Ok(total)
    }

    /// D_{φ⊕ψ}((x, v), (y, u)).
    pub fn bregman_distance(&self, x: &Vector, v: &Vector, y: &Vector, u: &Vector) -> Result<f64> {
        Ok(self.primal_geometry.bregman_distance(x, y)? + self.dual_geometry.bregman_distance(v, u)?)
    }

    /// (∇h(y), ∇ℓ(u)) as exact finite-sum averages.
    pub fn full_gradients(&self, y: &Vector, u: &Vector) -> Result<(Vector, Vector)> {
        if y.len() != self.primal_dim() || u.len() != self.dual_dim() {
            return Err(Error::Dimension(format!(
                "expected ({}, {}) got ({}, {})",
                self.primal_dim(),
                self.dual_dim(),
                y.len(),
                u.len()
            )));
        }
        Ok((self.h.gradient(y), self.ell.gradient(u)))
    }

    /// √(‖x‖² + ‖v‖²) in the paired norms.
    pub fn product_norm(&self, x: &Vector, v: &Vector) -> f64 {
        self.primal_geometry.norm(x).hypot(self.dual_geometry.norm(v))
    }
}
