//! Serializable problem instances and the builtin catalogue.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::default_start;
use crate::error::{Error, Result};
use crate::geometry::{GeometryKind, LegendreGeometry, SimpleFunction};
use crate::problem::{spectral_norm, CouplingOperator, FiniteSumSmooth, SaddleProblem, SmoothTerm};
use crate::{Matrix, Vector};

pub const BUILTIN_NAMES: [&str; 5] = [
    "rps-game",
    "quad-1d",
    "lasso-saddle",
    "strongly-convex-quad",
    "entropy-game-20",
];

/// Dense matrix in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixSpec {
    pub fn from_matrix(m: &Matrix) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            data.extend(m.row(i).iter());
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Dimension(format!(
                "matrix declared {}x{} but has {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(Matrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TermSpec {
    Zero,
    Linear {
        c: Vec<f64>,
    },
    /// ½‖Ax − b‖² + ⟨c, x⟩; `c` defaults to zero and `lipschitz` to ‖A‖².
    AffineQuadratic {
        a: MatrixSpec,
        b: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
}

impl TermSpec {
    fn build(&self, dim: usize) -> Result<(SmoothTerm, Option<f64>)> {
        let term = match self {
            TermSpec::Zero => return Ok((SmoothTerm::Zero { dim }, None)),
            TermSpec::Linear { c } => SmoothTerm::Linear {
                c: Vector::from_column_slice(c),
            },
            TermSpec::AffineQuadratic { a, b, c, lipschitz } => {
                let a = a.to_matrix()?;
                if b.len() != a.nrows() {
                    return Err(Error::Dimension(format!("b has {} entries, A has {} rows", b.len(), a.nrows())));
                }
                let c = match c {
                    Some(c) => Vector::from_column_slice(c),
                    None => Vector::zeros(a.ncols()),
                };
                if c.len() != a.ncols() {
                    return Err(Error::Dimension(format!("c has {} entries, A has {} columns", c.len(), a.ncols())));
                }
                let term = SmoothTerm::AffineQuadratic {
                    a,
                    b: Vector::from_column_slice(b),
                    c,
                };
                return Ok((term, *lipschitz));
            }
        };
        Ok((term, None))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialPoint {
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
}

/// A saddle problem in its on-disk form. Empty `h` or `ell` means zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub name: String,
    pub primal_geometry: GeometryKind,
    pub dual_geometry: GeometryKind,
    pub coupling: MatrixSpec,
    #[serde(default)]
    pub h: Vec<TermSpec>,
    #[serde(default)]
    pub ell: Vec<TermSpec>,
    pub f: SimpleFunction,
    pub g_star: SimpleFunction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialPoint>,
}

/// A built problem with its starting point (x̄₀, v̄₀).
#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: InstanceSpec,
    pub problem: SaddleProblem,
    pub x0: Vector,
    pub v0: Vector,
}

impl InstanceSpec {
    pub fn build(&self) -> Result<Instance> {
        let k = self.coupling.to_matrix()?;
        let d = k.ncols();
        let p = k.nrows();
        let primal = LegendreGeometry::new(self.primal_geometry, d);
        let dual = LegendreGeometry::new(self.dual_geometry, p);
        let problem = SaddleProblem::new(
            primal,
            dual,
            finite_sum(&self.h, d)?,
            finite_sum(&self.ell, p)?,
            self.f,
            self.g_star,
            CouplingOperator::new(k, self.primal_geometry, self.dual_geometry)?,
        )?;
        let (x0, v0) = match &self.initial {
            Some(init) => (Vector::from_column_slice(&init.primal), Vector::from_column_slice(&init.dual)),
            None => (
                default_start(problem.primal_geometry(), problem.f()),
                default_start(problem.dual_geometry(), problem.g_star()),
            ),
        };
        if x0.len() != d || v0.len() != p {
            return Err(Error::Dimension(format!(
                "initial point has sizes ({}, {}), expected ({d}, {p})",
                x0.len(),
                v0.len()
            )));
        }
        Ok(Instance {
            spec: self.clone(),
            problem,
            x0,
            v0,
        })
    }

    /// Canonical JSON: struct fields in declaration order, shortest
    /// round-trip float formatting.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("instance specs always serialize")
    }

    /// 64-bit FNV-1a of the canonical JSON, as 16 hex digits.
    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical_json().as_bytes()))
    }
}

fn finite_sum(specs: &[TermSpec], dim: usize) -> Result<FiniteSumSmooth> {
    if specs.is_empty() {
        return Ok(FiniteSumSmooth::zero(dim));
    }
    let mut terms = Vec::with_capacity(specs.len());
    let mut declared = Vec::with_capacity(specs.len());
    for spec in specs {
        let (term, lipschitz) = spec.build(dim)?;
        if term.dim() != dim {
            return Err(Error::Dimension(format!("term acts on {} coordinates, expected {dim}", term.dim())));
        }
        declared.push(lipschitz.unwrap_or_else(|| term.smoothness_bound()));
        terms.push(term);
    }
    FiniteSumSmooth::with_lipschitz(terms, declared)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |hash, &b| (hash ^ u64::from(b)).wrapping_mul(PRIME))
}

pub fn builtin(name: &str) -> Option<InstanceSpec> {
    match name {
        "rps-game" => Some(rps_game()),
        "quad-1d" => Some(quad_1d()),
        "lasso-saddle" => Some(lasso_saddle()),
        "strongly-convex-quad" => Some(strongly_convex_quad()),
        "entropy-game-20" => Some(entropy_game_20()),
        _ => None,
    }
}

fn row_major(rows: usize, cols: usize, data: Vec<f64>) -> MatrixSpec {
    MatrixSpec { rows, cols, data }
}

fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, half_width: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-half_width..=half_width)).collect()
}

/// Rock-paper-scissors with entropic geometry on both simplices.
fn rps_game() -> InstanceSpec {
    InstanceSpec {
        name: "rps-game".into(),
        primal_geometry: GeometryKind::NegativeEntropy,
        dual_geometry: GeometryKind::NegativeEntropy,
        coupling: row_major(3, 3, vec![0.0, -1.0, 1.0, 1.0, 0.0, -1.0, -1.0, 1.0, 0.0]),
        h: Vec::new(),
        ell: Vec::new(),
        f: SimpleFunction::SimplexIndicator,
        g_star: SimpleFunction::SimplexIndicator,
        initial: Some(InitialPoint {
            primal: vec![0.5, 0.3, 0.2],
            dual: vec![0.2, 0.3, 0.5],
        }),
    }
}

/// h = ½x², ℓ = ½v², K = [1]; saddle at the origin.
fn quad_1d() -> InstanceSpec {
    let half_square = TermSpec::AffineQuadratic {
        a: row_major(1, 1, vec![1.0]),
        b: vec![0.0],
        c: None,
        lipschitz: None,
    };
    InstanceSpec {
        name: "quad-1d".into(),
        primal_geometry: GeometryKind::Euclidean,
        dual_geometry: GeometryKind::Euclidean,
        coupling: row_major(1, 1, vec![1.0]),
        h: vec![half_square.clone()],
        ell: vec![half_square],
        f: SimpleFunction::Zero,
        g_star: SimpleFunction::Zero,
        initial: Some(InitialPoint {
            primal: vec![1.0],
            dual: vec![1.0],
        }),
    }
}

/// Least squares with an ℓ₁ penalty and a smoothed ℓ₁ coupling term,
/// written as a saddle with a box-constrained dual.
fn lasso_saddle() -> InstanceSpec {
    let (d, p, n, rows) = (8, 6, 8, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a55_0001);
    let h = (0..n)
        .map(|_| TermSpec::AffineQuadratic {
            a: row_major(rows, d, uniform_vec(&mut rng, rows * d, 1.0)),
            b: uniform_vec(&mut rng, rows, 1.0),
            c: None,
            lipschitz: None,
        })
        .collect();
    let ell = [0.2, 0.4, 0.6, 0.8]
        .iter()
        .map(|&eps: &f64| {
            let mut a = vec![0.0; p * p];
            for i in 0..p {
                a[i * p + i] = eps.sqrt();
            }
            TermSpec::AffineQuadratic {
                a: row_major(p, p, a),
                b: vec![0.0; p],
                c: None,
                lipschitz: None,
            }
        })
        .collect();
    let k = uniform_vec(&mut rng, p * d, 1.0);
    InstanceSpec {
        name: "lasso-saddle".into(),
        primal_geometry: GeometryKind::Euclidean,
        dual_geometry: GeometryKind::Euclidean,
        coupling: row_major(p, d, k),
        h,
        ell,
        f: SimpleFunction::L1Norm { weight: 0.1 },
        g_star: SimpleFunction::BoxIndicator,
        initial: Some(InitialPoint {
            primal: vec![0.0; d],
            dual: vec![0.0; p],
        }),
    }
}

/// Euclidean quadratic saddle with f = ½‖x‖², g* = ½‖v‖² (α = 1), ten
/// low-rank least-squares terms on each side and ‖K‖ = ½.
fn strongly_convex_quad() -> InstanceSpec {
    let (dim, n, rows) = (10, 10, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5c09_0002);
    let terms = |rng: &mut ChaCha8Rng| -> Vec<TermSpec> {
        (0..n)
            .map(|_| {
                let mut a = Matrix::from_row_slice(rows, dim, &uniform_vec(rng, rows * dim, 1.0));
                // Target curvature μᵢ ∈ [0.5, 1].
                let target = rng.random_range(0.5..=1.0f64);
                a *= (target / spectral_norm(&a).powi(2)).sqrt();
                TermSpec::AffineQuadratic {
                    a: MatrixSpec::from_matrix(&a),
                    b: uniform_vec(rng, rows, 1.0),
                    c: Some(uniform_vec(rng, dim, 0.2)),
                    lipschitz: None,
                }
            })
            .collect()
    };
    let h = terms(&mut rng);
    let ell = terms(&mut rng);
    let mut k = Matrix::from_row_slice(dim, dim, &uniform_vec(&mut rng, dim * dim, 1.0));
    k *= 0.5 / spectral_norm(&k);
    let initial = InitialPoint {
        primal: uniform_vec(&mut rng, dim, 2.0),
        dual: uniform_vec(&mut rng, dim, 2.0),
    };
    InstanceSpec {
        name: "strongly-convex-quad".into(),
        primal_geometry: GeometryKind::Euclidean,
        dual_geometry: GeometryKind::Euclidean,
        coupling: MatrixSpec::from_matrix(&k),
        h,
        ell,
        f: SimpleFunction::ScaledGeometry { weight: 1.0 },
        g_star: SimpleFunction::ScaledGeometry { weight: 1.0 },
        initial: Some(initial),
    }
}

/// A 20×20 regularized matrix game on simplices with entropic geometry;
/// each of the twenty terms per side is ⟨c, x⟩ + ½ρ‖x − b‖².
fn entropy_game_20() -> InstanceSpec {
    let (dim, n) = (20, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(0xe4e0_0020);
    let terms = |rng: &mut ChaCha8Rng| -> Vec<TermSpec> {
        (0..n)
            .map(|_| {
                let rho = rng.random_range(2.0..=6.0f64);
                let mut a = vec![0.0; dim * dim];
                for i in 0..dim {
                    a[i * dim + i] = rho.sqrt();
                }
                let centre: Vec<f64> = (0..dim)
                    .map(|_| rho.sqrt() * (1.0 + rng.random_range(-0.5..=0.5)) / dim as f64)
                    .collect();
                TermSpec::AffineQuadratic {
                    a: row_major(dim, dim, a),
                    b: centre,
                    c: Some(uniform_vec(rng, dim, 0.02)),
                    lipschitz: Some(rho),
                }
            })
            .collect()
    };
    let h = terms(&mut rng);
    let ell = terms(&mut rng);
    let k = uniform_vec(&mut rng, dim * dim, 0.5);
    let skewed = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let raw: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..=1.5f64).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|r| r / total).collect()
    };
    let initial = InitialPoint {
        primal: skewed(&mut rng),
        dual: skewed(&mut rng),
    };
    InstanceSpec {
        name: "entropy-game-20".into(),
        primal_geometry: GeometryKind::NegativeEntropy,
        dual_geometry: GeometryKind::NegativeEntropy,
        coupling: row_major(dim, dim, k),
        h,
        ell,
        f: SimpleFunction::SimplexIndicator,
        g_star: SimpleFunction::SimplexIndicator,
        initial: Some(initial),
    }
}
