//! Stage-wise stochastic primal-dual splitting with variance-reduced
//! estimators and Bregman proximal steps.
//!
//! Each stage fixes an anchor (x̄, v̄) and its full gradients, then runs `m`
//! inner steps
//!
//! ```text
//! y  = x_k + θ(x_k − x_{k−1})          u  = v_k + θ(v_k − v_{k−1})
//! x_{k+1} = (∇φ + γ∂f)⁻¹(∇φ(x_k) − γz_k − γK*u)
//! v_{k+1} = (∇ψ + γ∂g*)⁻¹(∇ψ(v_k) − γt_k + γKy)
//! ```
//!
//! The next anchor is Σ_{k=1..m} ω_k x_k and the next stage is warm-started
//! from (x_m, x_{m−1}, v_m, v_{m−1}).

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{AnchorState, SamplingScheme};
use crate::problem::SaddleProblem;
use crate::Vector;

/// Iterates whose product norm exceeds this abort the run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// The extrapolation switch θ ∈ {0, 1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Extrapolation {
    /// θ = 0
    Off,
    /// θ = 1
    On,
}

impl Extrapolation {
    pub fn theta(self) -> f64 {
        match self {
            Extrapolation::Off => 0.0,
            Extrapolation::On => 1.0,
        }
    }

    pub fn from_theta(theta: u8) -> Result<Self> {
        match theta {
            0 => Ok(Extrapolation::Off),
            1 => Ok(Extrapolation::On),
            other => Err(Error::Config(format!("theta must be 0 or 1, got {other}"))),
        }
    }
}

/// How inner iterates are averaged into the next anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightSchedule {
    /// ω_k = 1/m
    UniformAverage,
    /// ω_k = τ^{k−1}/δ with δ = Σ_{k=1..m} τ^{k−1}
    GeometricAverage { tau: f64 },
}

impl WeightSchedule {
    /// ω_1, …, ω_m.
    pub fn weights(&self, m: usize) -> Vec<f64> {
        match *self {
            WeightSchedule::UniformAverage => vec![1.0 / m as f64; m],
            WeightSchedule::GeometricAverage { tau } => {
                let powers: Vec<f64> = (0..m).map(|k| tau.powi(k as i32)).collect();
                let delta: f64 = powers.iter().sum();
                powers.into_iter().map(|p| p / delta).collect()
            }
        }
    }
}

/// Which gradient estimator drives the inner step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Anchor-corrected importance-sampled estimator.
    VarianceReduced,
    /// Full gradients ∇h(y), ∇ℓ(u); no sampling.
    Exact,
    /// ∇hᵢ(y)/(qᵢn) without an anchor correction.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub gamma: f64,
    pub extrapolation: Extrapolation,
    pub m: usize,
    pub stages: usize,
    pub weights: WeightSchedule,
    pub seed: u64,
    #[serde(default)]
    pub record_inner: bool,
    #[serde(default)]
    pub unsafe_override: bool,
}

impl SolverConfig {
    /// θ = 1 with uniform stage averages.
    pub fn ergodic(gamma: f64, m: usize, stages: usize, seed: u64) -> Self {
        Self {
            gamma,
            extrapolation: Extrapolation::On,
            m,
            stages,
            weights: WeightSchedule::UniformAverage,
            seed,
            record_inner: false,
            unsafe_override: false,
        }
    }

    /// θ = 0 with geometric stage averages of ratio `tau`.
    pub fn linear(gamma: f64, tau: f64, m: usize, stages: usize, seed: u64) -> Self {
        Self {
            gamma,
            extrapolation: Extrapolation::Off,
            m,
            stages,
            weights: WeightSchedule::GeometricAverage { tau },
            seed,
            record_inner: false,
            unsafe_override: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.gamma)));
        }
        if self.m == 0 {
            return Err(Error::Config("inner iteration count m must be positive".into()));
        }
        if let WeightSchedule::GeometricAverage { tau } = self.weights {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::Config(format!("geometric weight ratio must be positive, got {tau}")));
            }
        }
        let paired = matches!(
            (self.extrapolation, self.weights),
            (Extrapolation::On, WeightSchedule::UniformAverage)
                | (Extrapolation::Off, WeightSchedule::GeometricAverage { .. })
        );
        if !paired && !self.unsafe_override {
            return Err(Error::Config(
                "uniform averaging requires theta = 1 and geometric averaging requires theta = 0; \
                 set unsafe_override to mix them"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// The two most recent primal and dual iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub x_prev: Vector,
    pub x: Vector,
    pub v_prev: Vector,
    pub v: Vector,
}

impl IterateState {
    /// x₀ = x₋₁ = x̄₀, v₀ = v₋₁ = v̄₀.
    pub fn at(x: Vector, v: Vector) -> Self {
        Self {
            x_prev: x.clone(),
            x,
            v_prev: v.clone(),
            v,
        }
    }
}

/// Mutable state of one stage.
#[derive(Debug, Clone)]
pub struct StageState {
    pub stage: usize,
    pub iterates: IterateState,
    pub x_bar_accum: Vector,
    pub v_bar_accum: Vector,
    pub anchor: AnchorState,
}

/// What a stage hands to the next one.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCarry {
    pub iterates: IterateState,
    pub x_bar: Vector,
    pub v_bar: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerIterate {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    /// 1-based stage index s of the anchor x̄_s this record describes.
    pub stage: usize,
    /// G(x̄_s, v*) − G(x*, v̄_s)
    pub gap_pair: Option<f64>,
    /// Gap pair of the running average (Σ_{r≤s} x̄_r / s, Σ_{r≤s} v̄_r / s).
    pub ergodic_gap: Option<f64>,
    /// D((x*, v*), (x̄_s, v̄_s))
    pub bregman_dist: Option<f64>,
    pub wall_ms: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inner: Vec<InnerIterate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapTrace {
    pub records: Vec<StageRecord>,
    /// Last anchor (x̄_N, v̄_N).
    pub x_bar: Vector,
    pub v_bar: Vector,
    /// Ergodic averages (x̂_N, v̂_N); the initial point when N = 0.
    pub x_hat: Vector,
    pub v_hat: Vector,
}

/// A run that stopped early, with everything recorded before the failure.
#[derive(Debug, Clone)]
pub struct SolveError {
    pub partial: GapTrace,
    pub error: Error,
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} stages)", self.error, self.partial.records.len())
    }
}

impl std::error::Error for SolveError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// A single primal-dual step with caller-supplied gradient estimates.
pub(crate) fn primal_dual_update(
    problem: &SaddleProblem,
    gamma: f64,
    state: &IterateState,
    y: &Vector,
    u: &Vector,
    z: &Vector,
    t: &Vector,
) -> Result<IterateState> {
    let coupling = problem.coupling();
    let primal = problem.primal_geometry();
    let dual = problem.dual_geometry();

    let w_x = primal.grad(&state.x)? - (z + coupling.adjoint_apply(u)) * gamma;
    let x_next = primal.mirror_prox(problem.f(), gamma, &w_x)?;
    let w_v = dual.grad(&state.v)? - (t - coupling.apply(y)) * gamma;
    let v_next = dual.mirror_prox(problem.g_star(), gamma, &w_v)?;

    Ok(IterateState {
        x_prev: state.x.clone(),
        x: x_next,
        v_prev: state.v.clone(),
        v: v_next,
    })
}

fn extrapolate(current: &Vector, previous: &Vector, extrapolation: Extrapolation) -> Vector {
    match extrapolation {
        Extrapolation::Off => current.clone(),
        Extrapolation::On => current * 2.0 - previous,
    }
}

/// Source of the gradient estimates (z_k, t_k) for one step.
#[derive(Debug, Clone, Copy)]
pub(crate) enum GradientRule<'s> {
    VarianceReduced {
        scheme: &'s SamplingScheme,
        anchor: &'s AnchorState,
    },
    Exact,
    Plain {
        scheme: &'s SamplingScheme,
    },
}

pub(crate) fn estimated_step<R: Rng + ?Sized>(
    problem: &SaddleProblem,
    rule: GradientRule<'_>,
    extrapolation: Extrapolation,
    gamma: f64,
    state: &IterateState,
    rng: &mut R,
) -> Result<IterateState> {
    let y = extrapolate(&state.x, &state.x_prev, extrapolation);
    let u = extrapolate(&state.v, &state.v_prev, extrapolation);
    let (z, t) = match rule {
        GradientRule::Exact => problem.full_gradients(&y, &u)?,
        GradientRule::VarianceReduced { scheme, anchor } => {
            let (i, j) = scheme.sample_pair(rng);
            (
                scheme.estimate_primal(problem.h(), anchor, &y, i),
                scheme.estimate_dual(problem.ell(), anchor, &u, j),
            )
        }
        GradientRule::Plain { scheme } => {
            let (i, j) = scheme.sample_pair(rng);
            (scheme.plain_primal(problem.h(), &y, i), scheme.plain_dual(problem.ell(), &u, j))
        }
    };
    primal_dual_update(problem, gamma, state, &y, &u, &z, &t)
}

pub struct Solver<'a> {
    problem: &'a SaddleProblem,
    scheme: &'a SamplingScheme,
    config: SolverConfig,
    weights: Vec<f64>,
    estimator: EstimatorKind,
}

impl<'a> Solver<'a> {
    pub fn new(problem: &'a SaddleProblem, scheme: &'a SamplingScheme, config: SolverConfig) -> Result<Self> {
        Self::with_estimator(problem, scheme, config, EstimatorKind::VarianceReduced)
    }

    pub fn with_estimator(
        problem: &'a SaddleProblem,
        scheme: &'a SamplingScheme,
        config: SolverConfig,
        estimator: EstimatorKind,
    ) -> Result<Self> {
        config.validate()?;
        if scheme.q().len() != problem.h().count() || scheme.q_prime().len() != problem.ell().count() {
            return Err(Error::Dimension("sampling scheme does not match the problem's term counts".into()));
        }
        let weights = config.weights.weights(config.m);
        Ok(Self {
            problem,
            scheme,
            config,
            weights,
            estimator,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// ω_1, …, ω_m.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn start_stage(&self, stage: usize, carry: StageCarry) -> Result<StageState> {
        let anchor = AnchorState::new(self.problem, carry.x_bar, carry.v_bar)?;
        Ok(StageState {
            stage,
            iterates: carry.iterates,
            x_bar_accum: Vector::zeros(self.problem.primal_dim()),
            v_bar_accum: Vector::zeros(self.problem.dual_dim()),
            anchor,
        })
    }

    /// Inner step k ∈ {0..m−1}: advances the iterates and adds
    /// ω_{k+1}·(x_{k+1}, v_{k+1}) to the stage averages.
    pub fn inner_step<R: Rng + ?Sized>(&self, state: &mut StageState, k: usize, rng: &mut R) -> Result<()> {
        let rule = match self.estimator {
            EstimatorKind::VarianceReduced => GradientRule::VarianceReduced {
                scheme: self.scheme,
                anchor: &state.anchor,
            },
            EstimatorKind::Exact => GradientRule::Exact,
            EstimatorKind::Plain => GradientRule::Plain { scheme: self.scheme },
        };
        let next = estimated_step(
            self.problem,
            rule,
            self.config.extrapolation,
            self.config.gamma,
            &state.iterates,
            rng,
        )?;
        let norm = self.problem.product_norm(&next.x, &next.v);
        if !(norm <= DIVERGENCE_THRESHOLD) {
            return Err(Error::Divergence {
                stage: state.stage,
                step: k,
                norm,
            });
        }
        let weight = self.weights[k];
        state.x_bar_accum.axpy(weight, &next.x, 1.0);
        state.v_bar_accum.axpy(weight, &next.v, 1.0);
        state.iterates = next;
        Ok(())
    }

    /// Runs the m inner steps of stage `stage` and returns the warm-start
    /// carry with the new anchor, plus the inner iterates when recorded.
    pub fn run_stage<R: Rng + ?Sized>(
        &self,
        stage: usize,
        carry: StageCarry,
        rng: &mut R,
    ) -> Result<(StageCarry, Vec<InnerIterate>)> {
        let mut state = self.start_stage(stage, carry)?;
        let mut inner = Vec::new();
        for k in 0..self.config.m {
            self.inner_step(&mut state, k, rng)?;
            if self.config.record_inner {
                inner.push(InnerIterate {
                    x: state.iterates.x.iter().copied().collect(),
                    v: state.iterates.v.iter().copied().collect(),
                });
            }
        }
        Ok((
            StageCarry {
                iterates: state.iterates,
                x_bar: state.x_bar_accum,
                v_bar: state.v_bar_accum,
            },
            inner,
        ))
    }

    /// Runs all stages from (x̄₀, v̄₀), recording gap quantities against
    /// `saddle_ref` when one is given.
    pub fn solve(
        &self,
        x0: &Vector,
        v0: &Vector,
        saddle_ref: Option<(&Vector, &Vector)>,
    ) -> std::result::Result<GapTrace, SolveError> {
        let mut trace = GapTrace {
            records: Vec::with_capacity(self.config.stages),
            x_bar: x0.clone(),
            v_bar: v0.clone(),
            x_hat: x0.clone(),
            v_hat: v0.clone(),
        };
        let fail = |trace: GapTrace, error: Error| SolveError { partial: trace, error };
        let checks = self
            .problem
            .primal_geometry()
            .check_interior(x0)
            .and_then(|_| self.problem.dual_geometry().check_interior(v0));
        if let Err(error) = checks {
            return Err(fail(trace, error));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut carry = StageCarry {
            iterates: IterateState::at(x0.clone(), v0.clone()),
            x_bar: x0.clone(),
            v_bar: v0.clone(),
        };
        let mut x_sum = Vector::zeros(x0.len());
        let mut v_sum = Vector::zeros(v0.len());

        for s in 1..=self.config.stages {
            let started = Instant::now();
            let (next, inner) = match self.run_stage(s, carry, &mut rng) {
                Ok(out) => out,
                Err(error) => return Err(fail(trace, error)),
            };
            carry = next;
            x_sum += &carry.x_bar;
            v_sum += &carry.v_bar;
            let x_hat = &x_sum / s as f64;
            let v_hat = &v_sum / s as f64;

            let (gap_pair, ergodic_gap, bregman_dist) = match saddle_ref {
                None => (None, None, None),
                Some((x_star, v_star)) => {
                    let measured = self
                        .problem
                        .gap_pair(&carry.x_bar, &carry.v_bar, x_star, v_star)
                        .and_then(|g| {
                            let e = self.problem.gap_pair(&x_hat, &v_hat, x_star, v_star)?;
                            let d = self.problem.bregman_distance(x_star, v_star, &carry.x_bar, &carry.v_bar)?;
                            Ok((g, e, d))
                        });
                    match measured {
                        Ok((g, e, d)) => (Some(g), Some(e), Some(d)),
                        Err(error) => return Err(fail(trace, error)),
                    }
                }
            };
            trace.records.push(StageRecord {
                stage: s,
                gap_pair,
                ergodic_gap,
                bregman_dist,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
                inner,
            });
            trace.x_bar = carry.x_bar.clone();
            trace.v_bar = carry.v_bar.clone();
            trace.x_hat = x_hat;
            trace.v_hat = v_hat;
        }
        Ok(trace)
    }
}

/// Convenience wrapper around [`Solver::solve`].
pub fn solve(
    problem: &SaddleProblem,
    scheme: &SamplingScheme,
    config: SolverConfig,
    x0: &Vector,
    v0: &Vector,
    saddle_ref: Option<(&Vector, &Vector)>,
) -> std::result::Result<GapTrace, SolveError> {
    let solver = Solver::new(problem, scheme, config).map_err(|error| SolveError {
        partial: GapTrace {
            records: Vec::new(),
            x_bar: x0.clone(),
            v_bar: v0.clone(),
            x_hat: x0.clone(),
            v_hat: v0.clone(),
        },
        error,
    })?;
    solver.solve(x0, v0, saddle_ref)
}
