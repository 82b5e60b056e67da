//! Legendre mirror maps, Bregman distances and closed-form Bregman proximity
//! operators.
//!
//! Two mirror maps are supported:
//!
//! * `Euclidean`: φ(x) = ½‖x‖₂², 1-strongly convex in ‖·‖₂.
//! * `NegativeEntropy`: φ(x) = Σ xᵢ ln xᵢ on the positive orthant, 1-strongly
//!   convex in ‖·‖₁ on the probability simplex (Pinsker).
//!
//! A Bregman prox is realized as `(∇φ + γ∂f)⁻¹(w)` for a dual point `w`,
//! which is exactly the form the primal-dual updates need. Only pairs with a
//! closed-form solution are registered; anything else is rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vector;

/// Feasibility slack for the simplex constraint Σxᵢ = 1.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Feasibility slack for the box constraint |xᵢ| ≤ 1.
pub const BOX_TOLERANCE: f64 = 1e-12;

/// Largest argument accepted by `exp` before the conjugate map refuses it.
const EXP_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryKind {
    Euclidean,
    NegativeEntropy,
}

impl GeometryKind {
    pub fn name(self) -> &'static str {
        match self {
            GeometryKind::Euclidean => "euclidean",
            GeometryKind::NegativeEntropy => "negative-entropy",
        }
    }
}

/// A mirror map φ on ℝᵈ together with its paired norm.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreGeometry {
    dim: usize,
    kind: GeometryKind,
    domain_floor: f64,
}

impl LegendreGeometry {
    pub fn new(kind: GeometryKind, dim: usize) -> Self {
        Self {
            dim,
            kind,
            domain_floor: 1e-300,
        }
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::new(GeometryKind::Euclidean, dim)
    }

    pub fn negative_entropy(dim: usize) -> Self {
        Self::new(GeometryKind::NegativeEntropy, dim)
    }

    /// Overrides the minimum coordinate admitted by interior checks of the
    /// entropy geometry.
    pub fn with_domain_floor(mut self, floor: f64) -> Self {
        self.domain_floor = floor.max(0.0);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn domain_floor(&self) -> f64 {
        self.domain_floor
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!(
                "expected a vector of length {}, got {}",
                self.dim,
                x.len()
            )));
        }
        Ok(())
    }

    /// Fails with `Error::Domain` unless `x` lies in the interior of dom φ.
    pub fn check_interior(&self, x: &Vector) -> Result<()> {
        self.check_dim(x)?;
        for (index, &value) in x.iter().enumerate() {
            let ok = match self.kind {
                GeometryKind::Euclidean => value.is_finite(),
                GeometryKind::NegativeEntropy => value.is_finite() && value > self.domain_floor,
            };
            if !ok {
                return Err(Error::Domain { index, value });
            }
        }
        Ok(())
    }

    fn check_closed(&self, x: &Vector) -> Result<()> {
        self.check_dim(x)?;
        for (index, &value) in x.iter().enumerate() {
            let ok = match self.kind {
                GeometryKind::Euclidean => value.is_finite(),
                GeometryKind::NegativeEntropy => value.is_finite() && value >= 0.0,
            };
            if !ok {
                return Err(Error::Domain { index, value });
            }
        }
        Ok(())
    }

    /// φ(x), with the convention 0 ln 0 = 0 for the entropy.
    pub fn value(&self, x: &Vector) -> Result<f64> {
        self.check_closed(x)?;
        Ok(match self.kind {
            GeometryKind::Euclidean => 0.5 * x.norm_squared(),
            GeometryKind::NegativeEntropy => x.iter().map(|&xi| xlogx(xi)).sum(),
        })
    }

    pub fn grad(&self, x: &Vector) -> Result<Vector> {
        self.check_interior(x)?;
        Ok(match self.kind {
            GeometryKind::Euclidean => x.clone(),
            GeometryKind::NegativeEntropy => x.map(|xi| 1.0 + xi.ln()),
        })
    }

    /// ∇φ*(w), the inverse of [`grad`](Self::grad).
    pub fn grad_conjugate(&self, w: &Vector) -> Result<Vector> {
        self.check_dim(w)?;
        match self.kind {
            GeometryKind::Euclidean => Ok(w.clone()),
            GeometryKind::NegativeEntropy => {
                if let Some((index, &value)) = w
                    .iter()
                    .enumerate()
                    .find(|(_, wi)| !wi.is_finite() || **wi > EXP_LIMIT)
                {
                    return Err(Error::Overflow { index, value });
                }
                Ok(w.map(|wi| (wi - 1.0).exp()))
            }
        }
    }

    /// D_φ(x, y) = φ(x) − φ(y) − ⟨x − y, ∇φ(y)⟩.
    pub fn bregman_distance(&self, x: &Vector, y: &Vector) -> Result<f64> {
        self.check_interior(y)?;
        self.check_closed(x)?;
        Ok(match self.kind {
            GeometryKind::Euclidean => 0.5 * (x - y).norm_squared(),
            GeometryKind::NegativeEntropy => x
                .iter()
                .zip(y.iter())
                .map(|(&xi, &yi)| {
                    let term = if xi == 0.0 { yi } else { xi * (xi / yi).ln() - xi + yi };
                    term.max(0.0)
                })
                .sum(),
        })
    }

    /// The norm φ is 1-strongly convex in: ‖·‖₂ or ‖·‖₁.
    pub fn norm(&self, x: &Vector) -> f64 {
        match self.kind {
            GeometryKind::Euclidean => x.norm(),
            GeometryKind::NegativeEntropy => x.lp_norm(1),
        }
    }

    /// Dual of [`norm`](Self::norm): ‖·‖₂ or ‖·‖∞.
    pub fn dual_norm(&self, g: &Vector) -> f64 {
        match self.kind {
            GeometryKind::Euclidean => g.norm(),
            GeometryKind::NegativeEntropy => g.amax(),
        }
    }

    /// Solves ∇φ(p) + γ ∂f(p) ∋ w for p.
    pub fn mirror_prox(&self, function: &SimpleFunction, step: f64, w: &Vector) -> Result<Vector> {
        self.check_dim(w)?;
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Config(format!("prox step must be positive, got {step}")));
        }
        match (self.kind, function) {
            (GeometryKind::Euclidean, SimpleFunction::Zero) => Ok(w.clone()),
            (GeometryKind::Euclidean, SimpleFunction::L1Norm { weight }) => {
                Ok(soft_threshold(w, step * weight))
            }
            (GeometryKind::Euclidean, SimpleFunction::BoxIndicator) => Ok(w.map(|wi| wi.clamp(-1.0, 1.0))),
            (GeometryKind::Euclidean, SimpleFunction::SimplexIndicator) => Ok(project_simplex(w)),
            (GeometryKind::Euclidean, SimpleFunction::ScaledGeometry { weight }) => {
                Ok(w / (1.0 + step * weight))
            }
            (GeometryKind::NegativeEntropy, SimpleFunction::Zero) => self.grad_conjugate(w),
            (GeometryKind::NegativeEntropy, SimpleFunction::SimplexIndicator) => Ok(softmax(w)),
            (kind, function) => Err(Error::UnsupportedPair {
                geometry: kind.name(),
                function: function.name(),
            }),
        }
    }
}

/// The nonsmooth terms f and g* admitted by the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SimpleFunction {
    Zero,
    #[serde(rename = "simplex")]
    SimplexIndicator,
    /// Indicator of [−1, 1]ᵖ.
    #[serde(rename = "box")]
    BoxIndicator,
    #[serde(rename = "l1")]
    L1Norm { weight: f64 },
    /// μ·φ for the attached geometry φ; strongly convex relative to φ with
    /// modulus μ.
    ScaledGeometry { weight: f64 },
}

impl SimpleFunction {
    pub fn name(&self) -> &'static str {
        match self {
            SimpleFunction::Zero => "zero",
            SimpleFunction::SimplexIndicator => "simplex",
            SimpleFunction::BoxIndicator => "box",
            SimpleFunction::L1Norm { .. } => "l1",
            SimpleFunction::ScaledGeometry { .. } => "scaled-geometry",
        }
    }

    /// Modulus α of strong convexity relative to the attached geometry.
    pub fn relative_strong_convexity(&self) -> f64 {
        match self {
            SimpleFunction::ScaledGeometry { weight } => *weight,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SimpleFunction::L1Norm { weight } | SimpleFunction::ScaledGeometry { weight }
                if !(weight.is_finite() && *weight >= 0.0) =>
            {
                Err(Error::Config(format!("{} weight must be finite and nonnegative", self.name())))
            }
            _ => Ok(()),
        }
    }

    pub fn is_feasible(&self, x: &Vector) -> bool {
        match self {
            SimpleFunction::SimplexIndicator => {
                x.iter().all(|&xi| xi >= 0.0) && (x.sum() - 1.0).abs() <= SIMPLEX_TOLERANCE
            }
            SimpleFunction::BoxIndicator => x.iter().all(|&xi| xi.abs() <= 1.0 + BOX_TOLERANCE),
            _ => x.iter().all(|xi| xi.is_finite()),
        }
    }

    /// Extended-real value; indicators return +∞ off their set.
    pub fn evaluate(&self, geometry: &LegendreGeometry, x: &Vector) -> f64 {
        if !self.is_feasible(x) {
            return f64::INFINITY;
        }
        match self {
            SimpleFunction::Zero | SimpleFunction::SimplexIndicator | SimpleFunction::BoxIndicator => 0.0,
            SimpleFunction::L1Norm { weight } => weight * x.lp_norm(1),
            SimpleFunction::ScaledGeometry { weight } => match geometry.value(x) {
                Ok(v) => weight * v,
                Err(_) => f64::INFINITY,
            },
        }
    }

    /// f(x) − f(y), arranged to avoid cancellation between two large values.
    pub fn difference(&self, geometry: &LegendreGeometry, x: &Vector, y: &Vector) -> f64 {
        let fx_feasible = self.is_feasible(x);
        let fy_feasible = self.is_feasible(y);
        match (fx_feasible, fy_feasible) {
            (false, _) => return f64::INFINITY,
            (true, false) => return f64::NEG_INFINITY,
            _ => {}
        }
        match self {
            SimpleFunction::Zero | SimpleFunction::SimplexIndicator | SimpleFunction::BoxIndicator => 0.0,
            SimpleFunction::L1Norm { weight } => {
                weight * x.iter().zip(y.iter()).map(|(a, b)| a.abs() - b.abs()).sum::<f64>()
            }
            SimpleFunction::ScaledGeometry { weight } => match geometry.kind() {
                GeometryKind::Euclidean => weight * (x - y).dot(&((x + y) * 0.5)),
                GeometryKind::NegativeEntropy => {
                    weight
                        * x.iter()
                            .zip(y.iter())
                            .map(|(&a, &b)| xlogx(a) - xlogx(b))
                            .sum::<f64>()
                }
            },
        }
    }
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

pub fn soft_threshold(w: &Vector, threshold: f64) -> Vector {
    w.map(|wi| wi.signum() * (wi.abs() - threshold).max(0.0))
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(w: &Vector) -> Vector {
    let mut sorted: Vec<f64> = w.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, &value) in sorted.iter().enumerate() {
        cumulative += value;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if value - candidate > 0.0 {
            shift = candidate;
        }
    }
    w.map(|wi| (wi - shift).max(0.0))
}

/// exp(wᵢ) / Σⱼ exp(wⱼ), shifted by max(w) before exponentiation.
pub fn softmax(w: &Vector) -> Vector {
    let top = w.max();
    let shifted = w.map(|wi| (wi - top).exp());
    let total = shifted.sum();
    shifted / total
}
