//! Step-size conditions and rate bounds for the two convergence regimes.
//!
//! * Ergodic regime (θ = 1, uniform stage averages): requires
//!   `12γL₁ < 1` and `4γμ₀ + 2γ‖K‖ + 8L₂γ² ≤ 1`, and bounds the expected gap
//!   of the ergodic average by
//!   `[D(z*, z̄₀) + 4L₁γ²(m+2)·gap₀] / (mγ(1 − 12L₁γ)N)`.
//! * Linear regime (θ = 0, geometric stage averages, α > 0): with
//!   `α′ = α − 2‖K‖/M′`, `τ = 1 + γα′`, `η = 4γ²L₁`, `λ = (γ − ητ)/η` and
//!   `δ = Σ_{k=1..m} τ^{k−1}`, requires
//!   `0 < γ < min{1/(2‖K‖M′ + μ₀), (−1 + √(1 + α′/(4L₁)))/α′}` and
//!   `m > ln λ / ln τ`, and bounds the expected stage gap by
//!   `λ^{−s}/(ηδ)·[D(z*, z̄₀) + η(1+δ)·gap₀]`.
//!
//! All inequalities are evaluated exactly as stated, with no slack.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::SamplingScheme;
use crate::problem::SaddleProblem;
use crate::solver::WeightSchedule;
use crate::Vector;

/// λ below this value is flagged as a near-degenerate linear rate.
pub const NEAR_DEGENERATE_LAMBDA: f64 = 1.01;

/// The problem and sampling constants the certificates depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    pub l1: f64,
    pub l2: f64,
    pub mu0: f64,
    pub k_norm: f64,
    pub alpha: f64,
}

impl RateConstants {
    pub fn from_problem(problem: &SaddleProblem, scheme: &SamplingScheme) -> Self {
        Self {
            l1: scheme.l1(),
            l2: scheme.l2(),
            mu0: problem.mu0(),
            k_norm: problem.coupling().norm(),
            alpha: problem.alpha(),
        }
    }

    /// Largest γ with `4γμ₀ + 2γ‖K‖ + 8L₂γ² ≤ 1`, capped at the supremum
    /// 1/(12L₁) of the strict condition. Any γ strictly below the returned
    /// value passes both ergodic conditions.
    pub fn max_ergodic_step(&self) -> f64 {
        let linear = 4.0 * self.mu0 + 2.0 * self.k_norm;
        let quadratic = 8.0 * self.l2;
        let root = if quadratic > 0.0 {
            (-linear + (linear * linear + 4.0 * quadratic).sqrt()) / (2.0 * quadratic)
        } else if linear > 0.0 {
            1.0 / linear
        } else {
            f64::INFINITY
        };
        let strict = if self.l1 > 0.0 { 1.0 / (12.0 * self.l1) } else { f64::INFINITY };
        root.min(strict)
    }
}

/// D((x*, v*), (x̄₀, v̄₀)) and G(x̄₀, v*) − G(x*, v̄₀).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialTerms {
    pub bregman: f64,
    pub gap: f64,
}

impl InitialTerms {
    pub fn measure(problem: &SaddleProblem, x0: &Vector, v0: &Vector, x_star: &Vector, v_star: &Vector) -> Result<Self> {
        Ok(Self {
            bregman: problem.bregman_distance(x_star, v_star, x0, v0)?,
            gap: problem.gap_pair(x0, v0, x_star, v_star)?,
        })
    }
}

/// Something that yields a theoretical bound per stage index.
pub trait RateBound {
    fn bound_at(&self, index: usize) -> Option<f64>;
}

/// Bound values over `indices`, skipping indices where it is undefined.
pub fn theoretical_bound_curve<B, I>(certificate: &B, indices: I) -> Vec<(usize, f64)>
where
    B: RateBound + ?Sized,
    I: IntoIterator<Item = usize>,
{
    indices
        .into_iter()
        .filter_map(|i| certificate.bound_at(i).map(|b| (i, b)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicCertificate {
    pub l1: f64,
    pub l2: f64,
    pub mu0: f64,
    pub k_norm: f64,
    pub gamma: f64,
    pub m: usize,
    /// 12γL₁ < 1
    pub cond_a: bool,
    /// 4γμ₀ + 2γ‖K‖ + 8L₂γ² ≤ 1
    pub cond_b: bool,
    pub valid: bool,
    /// mγ(1 − 12L₁γ)
    pub denominator: f64,
    /// D(z*, z̄₀) + 4L₁γ²(m+2)·gap₀; absent without a reference saddle point.
    pub bound_constant: Option<f64>,
}

impl ErgodicCertificate {
    pub fn bound(&self, stages: usize) -> Option<f64> {
        if stages == 0 {
            return None;
        }
        self.bound_constant
            .map(|c| c / (self.denominator * stages as f64))
    }
}

impl RateBound for ErgodicCertificate {
    fn bound_at(&self, index: usize) -> Option<f64> {
        self.bound(index)
    }
}

pub fn certify_ergodic_from(
    constants: &RateConstants,
    gamma: f64,
    m: usize,
    initial: Option<InitialTerms>,
) -> ErgodicCertificate {
    let RateConstants { l1, l2, mu0, k_norm, .. } = *constants;
    let cond_a = 12.0 * gamma * l1 < 1.0;
    let cond_b = 4.0 * gamma * mu0 + 2.0 * gamma * k_norm + 8.0 * l2 * gamma * gamma <= 1.0;
    let bound_constant = initial.map(|init| init.bregman + 4.0 * l1 * gamma * gamma * (m as f64 + 2.0) * init.gap);
    ErgodicCertificate {
        l1,
        l2,
        mu0,
        k_norm,
        gamma,
        m,
        cond_a,
        cond_b,
        valid: cond_a && cond_b && gamma > 0.0 && m > 0,
        denominator: m as f64 * gamma * (1.0 - 12.0 * l1 * gamma),
        bound_constant,
    }
}

pub fn certify_ergodic(
    problem: &SaddleProblem,
    scheme: &SamplingScheme,
    gamma: f64,
    m: usize,
    initial: Option<InitialTerms>,
) -> ErgodicCertificate {
    certify_ergodic_from(&RateConstants::from_problem(problem, scheme), gamma, m, initial)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearCertificate {
    pub l1: f64,
    pub mu0: f64,
    pub k_norm: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub m_prime: f64,
    /// α − 2‖K‖/M′
    pub alpha_prime: f64,
    /// min{1/(2‖K‖M′ + μ₀), (−1 + √(1 + α′/(4L₁)))/α′}
    pub gamma_max: f64,
    pub gamma_ok: bool,
    /// 1 + γα′
    pub tau: f64,
    /// 4γ²L₁
    pub eta: f64,
    /// (γ − ητ)/η
    pub lambda: f64,
    /// Smallest integer strictly greater than ln λ / ln τ.
    pub m_min: usize,
    pub near_degenerate: bool,
    pub m: Option<usize>,
    pub m_ok: Option<bool>,
    /// Σ_{k=1..m} τ^{k−1}
    pub delta: Option<f64>,
    /// ω_k = τ^{k−1}/δ
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
    /// λ⁻¹, the per-stage contraction of the bound.
    pub rate_factor: f64,
    /// [D(z*, z̄₀) + η(1+δ)·gap₀]/(ηδ)
    pub prefactor: Option<f64>,
    pub valid: bool,
}

impl LinearCertificate {
    pub fn bound(&self, stage: usize) -> Option<f64> {
        self.prefactor
            .map(|p| p * self.rate_factor.powi(stage as i32))
    }

    /// Geometric weight schedule matching this certificate.
    pub fn weight_schedule(&self) -> WeightSchedule {
        WeightSchedule::GeometricAverage { tau: self.tau }
    }
}

impl RateBound for LinearCertificate {
    fn bound_at(&self, index: usize) -> Option<f64> {
        self.bound(index)
    }
}

/// Default M′ = 4‖K‖/α, which gives α′ = α/2.
pub fn default_m_prime(k_norm: f64, alpha: f64) -> f64 {
    if k_norm > 0.0 {
        4.0 * k_norm / alpha
    } else {
        1.0
    }
}

/// Smallest integer m with m > ratio (at least 1).
fn smallest_integer_above(ratio: f64) -> usize {
    if ratio.is_nan() || ratio < 0.0 {
        1
    } else if ratio.is_infinite() {
        usize::MAX
    } else {
        (ratio.floor() as usize + 1).max(1)
    }
}

pub fn certify_linear_from(
    constants: &RateConstants,
    gamma: f64,
    m_prime: Option<f64>,
    m: Option<usize>,
    initial: Option<InitialTerms>,
) -> Result<LinearCertificate> {
    let RateConstants { l1, mu0, k_norm, alpha, .. } = *constants;
    if !(alpha > 0.0) {
        return Err(Error::Config(format!(
            "linear certificate needs relative strong convexity alpha > 0, got {alpha}"
        )));
    }
    let m_prime = m_prime.unwrap_or_else(|| default_m_prime(k_norm, alpha));
    if !(m_prime > 0.0) || m_prime <= 2.0 * k_norm / alpha {
        return Err(Error::Config(format!(
            "M' = {m_prime} must exceed 2‖K‖/alpha = {}",
            2.0 * k_norm / alpha
        )));
    }
    let alpha_prime = alpha - 2.0 * k_norm / m_prime;
    let gamma_max = (1.0 / (2.0 * k_norm * m_prime + mu0))
        .min((-1.0 + (1.0 + alpha_prime / (4.0 * l1)).sqrt()) / alpha_prime);
    let gamma_ok = gamma > 0.0 && gamma < gamma_max;

    let tau = 1.0 + gamma * alpha_prime;
    let eta = 4.0 * gamma * gamma * l1;
    let lambda = (gamma - eta * tau) / eta;
    let m_min = if lambda.is_infinite() {
        1
    } else {
        smallest_integer_above(lambda.ln() / tau.ln())
    };

    let (m_ok, delta, weights) = match m {
        Some(m) => {
            let delta = (tau.powi(m as i32) - 1.0) / (tau - 1.0);
            (
                Some(m >= m_min),
                Some(delta),
                WeightSchedule::GeometricAverage { tau }.weights(m),
            )
        }
        None => (None, None, Vec::new()),
    };
    let prefactor = match (initial, delta) {
        (Some(init), Some(delta)) => Some((init.bregman + eta * (1.0 + delta) * init.gap) / (eta * delta)),
        _ => None,
    };

    Ok(LinearCertificate {
        l1,
        mu0,
        k_norm,
        alpha,
        gamma,
        m_prime,
        alpha_prime,
        gamma_max,
        gamma_ok,
        tau,
        eta,
        lambda,
        m_min,
        near_degenerate: lambda < NEAR_DEGENERATE_LAMBDA,
        m,
        m_ok,
        delta,
        weights,
        rate_factor: 1.0 / lambda,
        prefactor,
        valid: gamma_ok && lambda > 1.0 && m_ok.unwrap_or(true),
    })
}

pub fn certify_linear(
    problem: &SaddleProblem,
    scheme: &SamplingScheme,
    gamma: f64,
    m_prime: Option<f64>,
    m: Option<usize>,
    initial: Option<InitialTerms>,
) -> Result<LinearCertificate> {
    certify_linear_from(&RateConstants::from_problem(problem, scheme), gamma, m_prime, m, initial)
}
