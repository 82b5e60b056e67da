//! Certification, replicated runs and trace/summary emission.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bregvr::certificates::{certify_ergodic_from, certify_linear_from, InitialTerms, RateConstants};
use bregvr::{
    find_saddle, find_saddle_auto, ErgodicCertificate, Error, Extrapolation, GapTrace, Instance, LinearCertificate,
    SaddleOracle, SamplingScheme, SolveError, Solver, SolverConfig, WeightSchedule,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, OracleChoice};
use crate::CliError;

pub const TRACE_HEADER: [&str; 7] = [
    "replication",
    "stage",
    "gap_pair",
    "ergodic_gap",
    "bregman_dist",
    "bound",
    "wall_ms",
];

/// Exit status of a finished run whose replications did not all complete.
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_SOLVER_FAILURE: i32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "kebab-case")]
pub enum Certificate {
    Ergodic(ErgodicCertificate),
    Linear(LinearCertificate),
    /// No certificate applies, e.g. θ = 0 without relative strong convexity.
    Unavailable { reason: String },
}

impl Certificate {
    pub fn valid(&self) -> bool {
        match self {
            Certificate::Ergodic(c) => c.valid,
            Certificate::Linear(c) => c.valid,
            Certificate::Unavailable { .. } => false,
        }
    }

    /// Theoretical bound at stage `s`, when it can be evaluated.
    pub fn bound(&self, s: usize) -> Option<f64> {
        match self {
            Certificate::Ergodic(c) => c.bound(s),
            Certificate::Linear(c) => c.bound(s),
            Certificate::Unavailable { .. } => None,
        }
    }
}

fn certificate_for(
    config: &ExperimentConfig,
    constants: &RateConstants,
    initial: Option<InitialTerms>,
) -> Certificate {
    let solver = &config.solver;
    if solver.theta == 1 {
        let m = solver.m.expect("validated: m is set when theta = 1");
        Certificate::Ergodic(certify_ergodic_from(constants, solver.gamma, m, initial))
    } else {
        let base = match certify_linear_from(constants, solver.gamma, config.m_prime, None, None) {
            Ok(base) => base,
            Err(e) => return Certificate::Unavailable { reason: e.to_string() },
        };
        let m = solver.m.unwrap_or(base.m_min);
        match certify_linear_from(constants, solver.gamma, config.m_prime, Some(m), initial) {
            Ok(c) => Certificate::Linear(c),
            Err(e) => Certificate::Unavailable { reason: e.to_string() },
        }
    }
}

/// What `certify` prints.
#[derive(Debug, Clone, Serialize)]
pub struct CertifyReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    pub constants: RateConstants,
    pub certificate: Certificate,
}

pub fn certify(config: &ExperimentConfig) -> Result<CertifyReport, CliError> {
    if let Some(constants) = config.certify_constants {
        return Ok(CertifyReport {
            instance: None,
            constants,
            certificate: certificate_for(config, &constants, None),
        });
    }
    let prepared = prepare(config)?;
    Ok(CertifyReport {
        instance: Some(prepared.instance.spec.name.clone()),
        constants: prepared.constants,
        certificate: prepared.certificate,
    })
}

/// Everything a run needs before the first replication starts.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub instance: Instance,
    pub instance_hash: String,
    pub scheme: SamplingScheme,
    pub constants: RateConstants,
    pub saddle: Option<SaddleOracle>,
    pub certificate: Certificate,
    pub solver: SolverConfig,
}

fn build_instance(config: &ExperimentConfig) -> Result<(Instance, String), CliError> {
    let spec = config.instance_spec()?;
    let hash = spec.hash();
    let instance = spec.build().map_err(|e| CliError::Config(format!("instance `{}`: {e}", spec.name)))?;
    Ok((instance, hash))
}

pub fn reference_saddle(config: &ExperimentConfig, instance: &Instance) -> Result<Option<SaddleOracle>, CliError> {
    let problem = &instance.problem;
    if let Some(file) = &config.oracle_file {
        let path = config.resolve(file);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let oracle: SaddleOracle =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if oracle.primal.len() != problem.primal_dim() || oracle.dual.len() != problem.dual_dim() {
            return Err(CliError::Config(format!("{}: oracle dimensions do not match the instance", path.display())));
        }
        return Ok(Some(oracle));
    }
    let found = match config.oracle {
        OracleChoice::None => return Ok(None),
        OracleChoice::Auto => find_saddle_auto(problem),
        choice => find_saddle(problem, choice.method().expect("explicit oracle method")),
    };
    found.map(Some).map_err(CliError::Oracle)
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, CliError> {
    let (instance, instance_hash) = build_instance(config)?;
    let problem = &instance.problem;
    let scheme = SamplingScheme::new(problem, config.scheme);
    let constants = RateConstants::from_problem(problem, &scheme);
    let saddle = reference_saddle(config, &instance)?;
    let initial = match &saddle {
        Some(oracle) => {
            let (x_star, v_star) = oracle.point();
            Some(
                InitialTerms::measure(problem, &instance.x0, &instance.v0, &x_star, &v_star)
                    .map_err(|e| CliError::Config(format!("initial point: {e}")))?,
            )
        }
        None => None,
    };
    let certificate = certificate_for(config, &constants, initial);

    let s = &config.solver;
    let solver = if s.theta == 1 {
        SolverConfig {
            gamma: s.gamma,
            extrapolation: Extrapolation::On,
            m: s.m.expect("validated: m is set when theta = 1"),
            stages: s.stages,
            weights: match s.tau {
                Some(tau) => WeightSchedule::GeometricAverage { tau },
                None => WeightSchedule::UniformAverage,
            },
            seed: s.seed,
            record_inner: s.record_inner,
            unsafe_override: s.unsafe_override,
        }
    } else {
        let (m, tau) = match (&certificate, s.m, s.tau) {
            (Certificate::Linear(c), m, tau) => (m.unwrap_or(c.m_min), tau.unwrap_or(c.tau)),
            (_, Some(m), Some(tau)) => (m, tau),
            (Certificate::Unavailable { reason }, _, _) if !s.unsafe_override => {
                return Err(CliError::Certificate(reason.clone()))
            }
            _ => return Err(CliError::Config("without a linear certificate, theta = 0 needs explicit m and tau".into())),
        };
        SolverConfig {
            gamma: s.gamma,
            extrapolation: Extrapolation::Off,
            m,
            stages: s.stages,
            weights: WeightSchedule::GeometricAverage { tau },
            seed: s.seed,
            record_inner: s.record_inner,
            unsafe_override: s.unsafe_override,
        }
    };
    solver.validate().map_err(|e| CliError::Config(e.to_string()))?;

    Ok(Prepared {
        instance,
        instance_hash,
        scheme,
        constants,
        saddle,
        certificate,
        solver,
    })
}

#[derive(Debug, Serialize)]
struct TraceRow {
    replication: usize,
    stage: usize,
    gap_pair: Option<f64>,
    ergodic_gap: Option<f64>,
    bregman_dist: Option<f64>,
    bound: Option<f64>,
    wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stat {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            count: values.len(),
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageSummary {
    pub stage: usize,
    pub replications: usize,
    pub gap_pair: Option<Stat>,
    pub ergodic_gap: Option<Stat>,
    pub bregman_dist: Option<Stat>,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub replication: usize,
    pub seed: u64,
    /// Number of stages completed before the failure.
    pub completed_stages: usize,
    pub kind: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub instance: String,
    pub instance_hash: String,
    pub replications: usize,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
    pub solver: SolverConfig,
    pub sampling: SamplingScheme,
    pub certificate: Certificate,
    pub saddle: Option<SaddleOracle>,
    pub stages: Vec<StageSummary>,
    pub errors: Vec<ErrorRecord>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub exit_code: i32,
    pub trace_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary: Summary,
}

fn error_kind(error: &Error) -> &'static str {
    match error {
        Error::Domain { .. } => "domain",
        Error::Overflow { .. } => "overflow",
        Error::UnsupportedPair { .. } => "unsupported-pair",
        Error::Dimension(_) => "dimension",
        Error::Config(_) => "config",
        Error::NegativeGap(_) => "negative-gap",
        Error::Divergence { .. } => "divergence",
        Error::OracleFailure(_) => "oracle-failure",
    }
}

/// Runs every replication and writes `trace.csv` and `summary.json` into the
/// output directory. Replications run in parallel; output order is by
/// replication, then stage.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let prepared = prepare(config)?;
    if !prepared.certificate.valid() && !config.solver.unsafe_override {
        let detail = serde_json::to_string(&prepared.certificate).unwrap_or_default();
        return Err(CliError::Certificate(detail));
    }

    let problem = &prepared.instance.problem;
    let reference = prepared.saddle.as_ref().map(SaddleOracle::point);
    let seeds = config.seeds();
    let outcomes: Vec<Result<GapTrace, SolveError>> = seeds
        .par_iter()
        .map(|&seed| {
            let solver_config = SolverConfig {
                seed,
                ..prepared.solver.clone()
            };
            let solver = Solver::new(problem, &prepared.scheme, solver_config).map_err(|error| SolveError {
                partial: GapTrace {
                    records: Vec::new(),
                    x_bar: prepared.instance.x0.clone(),
                    v_bar: prepared.instance.v0.clone(),
                    x_hat: prepared.instance.x0.clone(),
                    v_hat: prepared.instance.v0.clone(),
                },
                error,
            })?;
            solver.solve(
                &prepared.instance.x0,
                &prepared.instance.v0,
                reference.as_ref().map(|(x, v)| (x, v)),
            )
        })
        .collect();

    let out_dir = config.resolve(&config.output_dir);
    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;

    let mut errors = Vec::new();
    let mut exit_code = 0;
    let traces: Vec<&GapTrace> = outcomes
        .iter()
        .enumerate()
        .map(|(r, outcome)| match outcome {
            Ok(trace) => trace,
            Err(failure) => {
                let divergent = matches!(failure.error, Error::Divergence { .. });
                let code = if divergent { EXIT_DIVERGENCE } else { EXIT_SOLVER_FAILURE };
                exit_code = exit_code.max(code);
                errors.push(ErrorRecord {
                    replication: r,
                    seed: seeds[r],
                    completed_stages: failure.partial.records.len(),
                    kind: error_kind(&failure.error),
                    message: failure.error.to_string(),
                });
                &failure.partial
            }
        })
        .collect();

    let trace_path = out_dir.join("trace.csv");
    write_trace(&trace_path, &traces, &prepared.certificate, config.record_wall_time)?;
    if config.solver.record_inner {
        write_inner(&out_dir.join("inner.jsonl"), &traces)?;
    }

    let summary = Summary {
        instance: prepared.instance.spec.name.clone(),
        instance_hash: prepared.instance_hash.clone(),
        replications: config.replications,
        seeds,
        config: config.clone(),
        solver: prepared.solver.clone(),
        sampling: prepared.scheme.clone(),
        certificate: prepared.certificate.clone(),
        saddle: prepared.saddle.clone(),
        stages: summarize(&traces, config.solver.stages, &prepared.certificate),
        errors,
    };
    let summary_path = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Output(e.to_string()))?;
    fs::write(&summary_path, json + "\n").map_err(|e| CliError::io(&summary_path, e))?;

    Ok(RunReport {
        exit_code,
        trace_path,
        summary_path,
        summary,
    })
}

fn write_trace(path: &Path, traces: &[&GapTrace], certificate: &Certificate, wall_time: bool) -> Result<(), CliError> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    let fail = |e: csv::Error| CliError::Output(format!("{}: {e}", path.display()));
    writer.write_record(TRACE_HEADER).map_err(fail)?;
    for (replication, trace) in traces.iter().enumerate() {
        for record in &trace.records {
            writer
                .serialize(TraceRow {
                    replication,
                    stage: record.stage,
                    gap_pair: record.gap_pair,
                    ergodic_gap: record.ergodic_gap,
                    bregman_dist: record.bregman_dist,
                    bound: certificate.bound(record.stage),
                    wall_ms: if wall_time { record.wall_ms } else { 0.0 },
                })
                .map_err(fail)?;
        }
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

fn write_inner(path: &Path, traces: &[&GapTrace]) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Line<'a> {
        replication: usize,
        stage: usize,
        step: usize,
        x: &'a [f64],
        v: &'a [f64],
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (replication, trace) in traces.iter().enumerate() {
        for record in &trace.records {
            for (k, inner) in record.inner.iter().enumerate() {
                let line = Line {
                    replication,
                    stage: record.stage,
                    step: k + 1,
                    x: &inner.x,
                    v: &inner.v,
                };
                serde_json::to_writer(&mut out, &line).map_err(|e| CliError::Output(e.to_string()))?;
                out.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
            }
        }
    }
    out.flush().map_err(|e| CliError::io(path, e))
}

/// Per-stage statistics over the replications that reached each stage.
pub fn summarize(traces: &[&GapTrace], stages: usize, certificate: &Certificate) -> Vec<StageSummary> {
    (1..=stages)
        .map(|s| {
            let records: Vec<_> = traces.iter().filter_map(|t| t.records.get(s - 1)).collect();
            let column = |get: fn(&bregvr::StageRecord) -> Option<f64>| -> Vec<f64> {
                records.iter().filter_map(|r| get(r)).collect()
            };
            StageSummary {
                stage: s,
                replications: records.len(),
                gap_pair: Stat::of(&column(|r| r.gap_pair)),
                ergodic_gap: Stat::of(&column(|r| r.ergodic_gap)),
                bregman_dist: Stat::of(&column(|r| r.bregman_dist)),
                bound: certificate.bound(s),
            }
        })
        .filter(|summary| summary.replications > 0)
        .collect()
}

pub fn oracle(config: &ExperimentConfig) -> Result<SaddleOracle, CliError> {
    let (instance, _) = build_instance(config)?;
    let mut config = config.clone();
    if config.oracle == OracleChoice::None {
        config.oracle = OracleChoice::Auto;
    }
    Ok(reference_saddle(&config, &instance)?.expect("an oracle method is selected"))
}
