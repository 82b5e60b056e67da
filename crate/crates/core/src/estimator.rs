//! Importance-sampled, anchor-corrected gradient estimators.
//!
//! For a finite sum h = (1/n) Σ hᵢ sampled with probabilities qᵢ, the estimator
//! at a query point y with anchor x̄ is
//!
//! ```text
//! z = (∇h_i(y) − ∇h_i(x̄)) / (q_i n) + ∇h(x̄)
//! ```
//!
//! which is unbiased for ∇h(y) and whose variance vanishes as y and x̄ approach
//! the same point.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{FiniteSumSmooth, SaddleProblem};
use crate::Vector;

/// Relative floor applied to Lipschitz-proportional probabilities so that
/// zero-curvature terms keep a positive sampling probability.
pub const PROPORTIONAL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    #[default]
    Uniform,
    LipschitzProportional,
}

/// Sampling distributions Q and Q′ with their variance constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingScheme {
    q: Vec<f64>,
    q_prime: Vec<f64>,
    #[serde(skip)]
    cumulative: Vec<f64>,
    #[serde(skip)]
    cumulative_prime: Vec<f64>,
    l_q: f64,
    l_q_prime: f64,
    l1: f64,
    l2: f64,
}

fn probabilities(lipschitz: &[f64], mode: SamplingMode) -> Vec<f64> {
    let n = lipschitz.len();
    let total: f64 = lipschitz.iter().sum();
    match mode {
        SamplingMode::LipschitzProportional if total > 0.0 => {
            let floor = PROPORTIONAL_FLOOR * total / n as f64;
            let floored: Vec<f64> = lipschitz.iter().map(|&l| l.max(floor)).collect();
            let sum: f64 = floored.iter().sum();
            floored.into_iter().map(|l| l / sum).collect()
        }
        _ => vec![1.0 / n as f64; n],
    }
}

fn validate_probabilities(q: &[f64], expected: usize, label: &str) -> Result<()> {
    if q.len() != expected {
        return Err(Error::Config(format!(
            "{label} has {} entries, expected {expected}",
            q.len()
        )));
    }
    if let Some(bad) = q.iter().find(|&&qi| !(qi > 0.0 && qi.is_finite())) {
        return Err(Error::Config(format!("{label} contains non-positive probability {bad}")));
    }
    let total: f64 = q.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("{label} sums to {total}, not 1")));
    }
    Ok(())
}

fn prefix_sums(q: &[f64]) -> Vec<f64> {
    let mut running = 0.0;
    let mut table: Vec<f64> = q
        .iter()
        .map(|qi| {
            running += qi;
            running
        })
        .collect();
    if let Some(last) = table.last_mut() {
        *last = 1.0;
    }
    table
}

/// (max μᵢ/(qᵢn), max μᵢ²/(qᵢn)).
fn variance_constants(lipschitz: &[f64], q: &[f64]) -> (f64, f64) {
    let n = q.len() as f64;
    lipschitz
        .iter()
        .zip(q)
        .fold((0.0f64, 0.0f64), |(lq, l2), (&mu, &qi)| {
            (lq.max(mu / (qi * n)), l2.max(mu * mu / (qi * n)))
        })
}

impl SamplingScheme {
    pub fn new(problem: &SaddleProblem, mode: SamplingMode) -> Self {
        let q = probabilities(problem.h().lipschitz(), mode);
        let q_prime = probabilities(problem.ell().lipschitz(), mode);
        Self::build(problem, q, q_prime)
    }

    pub fn from_probabilities(problem: &SaddleProblem, q: Vec<f64>, q_prime: Vec<f64>) -> Result<Self> {
        validate_probabilities(&q, problem.h().count(), "Q")?;
        validate_probabilities(&q_prime, problem.ell().count(), "Q'")?;
        Ok(Self::build(problem, q, q_prime))
    }

    fn build(problem: &SaddleProblem, q: Vec<f64>, q_prime: Vec<f64>) -> Self {
        let (l_q, l2_h) = variance_constants(problem.h().lipschitz(), &q);
        let (l_q_prime, l2_ell) = variance_constants(problem.ell().lipschitz(), &q_prime);
        Self {
            cumulative: prefix_sums(&q),
            cumulative_prime: prefix_sums(&q_prime),
            q,
            q_prime,
            l_q,
            l_q_prime,
            l1: l_q.max(l_q_prime),
            l2: l2_h.max(l2_ell),
        }
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn q_prime(&self) -> &[f64] {
        &self.q_prime
    }

    pub fn l_q(&self) -> f64 {
        self.l_q
    }

    pub fn l_q_prime(&self) -> f64 {
        self.l_q_prime
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn is_uniform(&self) -> bool {
        let uniform = |q: &[f64]| {
            let target = 1.0 / q.len() as f64;
            q.iter().all(|&qi| (qi - target).abs() <= 1e-15)
        };
        uniform(&self.q) && uniform(&self.q_prime)
    }

    /// Primal index for a uniform draw `u ∈ [0, 1)` by inverse CDF.
    pub fn primal_index(&self, u: f64) -> usize {
        inverse_cdf(&self.cumulative, u)
    }

    pub fn dual_index(&self, u: f64) -> usize {
        inverse_cdf(&self.cumulative_prime, u)
    }

    /// Draws (i_k, j_k) independently, consuming the primal draw first.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let i = self.primal_index(rng.random::<f64>());
        let j = self.dual_index(rng.random::<f64>());
        (i, j)
    }

    fn weight(q: &[f64], index: usize) -> f64 {
        1.0 / (q[index] * q.len() as f64)
    }

    /// z = (∇hᵢ(y) − ∇hᵢ(x̄))/(qᵢn) + ∇h(x̄).
    pub fn estimate_primal(&self, h: &FiniteSumSmooth, anchor: &AnchorState, y: &Vector, index: usize) -> Vector {
        let correction = h.term_gradient(index, y) - h.term_gradient(index, &anchor.x_bar);
        correction * Self::weight(&self.q, index) + &anchor.grad_h_bar
    }

    /// t = (∇ℓⱼ(u) − ∇ℓⱼ(v̄))/(q′ⱼn′) + ∇ℓ(v̄).
    pub fn estimate_dual(&self, ell: &FiniteSumSmooth, anchor: &AnchorState, u: &Vector, index: usize) -> Vector {
        let correction = ell.term_gradient(index, u) - ell.term_gradient(index, &anchor.v_bar);
        correction * Self::weight(&self.q_prime, index) + &anchor.grad_ell_bar
    }

    /// ∇hᵢ(y)/(qᵢn), the estimator without an anchor.
    pub fn plain_primal(&self, h: &FiniteSumSmooth, y: &Vector, index: usize) -> Vector {
        h.term_gradient(index, y) * Self::weight(&self.q, index)
    }

    pub fn plain_dual(&self, ell: &FiniteSumSmooth, u: &Vector, index: usize) -> Vector {
        ell.term_gradient(index, u) * Self::weight(&self.q_prime, index)
    }
}

fn inverse_cdf(cumulative: &[f64], u: f64) -> usize {
    cumulative
        .partition_point(|&c| c <= u)
        .min(cumulative.len() - 1)
}

/// Stage reference points and their full gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorState {
    pub x_bar: Vector,
    pub v_bar: Vector,
    pub grad_h_bar: Vector,
    pub grad_ell_bar: Vector,
}

impl AnchorState {
    pub fn new(problem: &SaddleProblem, x_bar: Vector, v_bar: Vector) -> Result<Self> {
        let (grad_h_bar, grad_ell_bar) = problem.full_gradients(&x_bar, &v_bar)?;
        Ok(Self {
            x_bar,
            v_bar,
            grad_h_bar,
            grad_ell_bar,
        })
    }
}
