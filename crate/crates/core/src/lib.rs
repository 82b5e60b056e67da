//! Stochastic variance-reduced primal-dual splitting for convex-concave
//! saddle problems
//!
//! ```text
//! min_x max_v  h(x) + f(x) + ⟨Kx, v⟩ − g*(v) − ℓ(v)
//! ```
//!
//! with finite-sum smooth parts h, ℓ, simple nonsmooth parts f, g*, and
//! Bregman proximal steps in entropic or Euclidean geometry. Alongside the
//! solver the crate provides step-size certificates with their rate bounds,
//! deterministic and non-variance-reduced baselines, and saddle oracles.

pub mod baselines;
pub mod certificates;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod instances;
pub mod problem;
pub mod solver;

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;

pub use baselines::{
    deterministic_step, find_saddle, find_saddle_auto, plain_sgd_step, OracleMethod, SaddleOracle,
};
pub use certificates::{
    certify_ergodic, certify_linear, ErgodicCertificate, InitialTerms, LinearCertificate, RateBound, RateConstants,
};
pub use error::{Error, Result};
pub use estimator::{AnchorState, SamplingMode, SamplingScheme};
pub use geometry::{GeometryKind, LegendreGeometry, SimpleFunction};
pub use instances::{builtin, Instance, InstanceSpec, BUILTIN_NAMES};
pub use problem::{CouplingOperator, FiniteSumSmooth, SaddleProblem, SmoothTerm};
pub use solver::{
    EstimatorKind, Extrapolation, GapTrace, IterateState, SolveError, Solver, SolverConfig, StageRecord,
    WeightSchedule,
};
