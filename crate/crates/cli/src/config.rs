//! Experiment configuration, read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use bregvr::certificates::RateConstants;
use bregvr::{builtin, InstanceSpec, OracleMethod, SamplingMode};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleChoice {
    /// Closed form when the instance admits one, the deterministic fixed
    /// point otherwise.
    #[default]
    Auto,
    ClosedForm,
    HighAccuracyDeterministic,
    /// No reference saddle point; gap columns stay empty.
    None,
}

impl OracleChoice {
    pub fn method(self) -> Option<OracleMethod> {
        match self {
            OracleChoice::ClosedForm => Some(OracleMethod::ClosedForm),
            OracleChoice::HighAccuracyDeterministic => Some(OracleMethod::HighAccuracyDeterministic),
            OracleChoice::Auto | OracleChoice::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub gamma: f64,
    /// Extrapolation switch: 1 pairs with uniform, 0 with geometric averages.
    pub theta: u8,
    /// Inner steps per stage; with theta = 0 it defaults to the certified m_min.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub stages: usize,
    #[serde(default)]
    pub seed: u64,
    /// Geometric weight ratio; with theta = 0 it defaults to the certified τ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default)]
    pub record_inner: bool,
    #[serde(default)]
    pub unsafe_override: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Builtin instance name or path to an instance JSON file.
    pub instance: String,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub scheme: SamplingMode,
    #[serde(default)]
    pub oracle: OracleChoice,
    /// Previously saved oracle JSON; takes precedence over `oracle`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_prime: Option<f64>,
    /// Emit measured stage times; off by default so traces are reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
    pub solver: SolverSection,
    /// Certify against these constants instead of those of the instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify_constants: Option<RateConstants>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line values that replace their config counterparts.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub stages: Option<usize>,
    pub unsafe_override: bool,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf);
        Ok(config)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.solver.seed = seed;
        }
        if let Some(stages) = overrides.stages {
            self.solver.stages = stages;
        }
        if overrides.unsafe_override {
            self.solver.unsafe_override = true;
        }
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = dir.clone();
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.replications == 0 {
            return Err(CliError::Config("replications must be at least 1".into()));
        }
        if self.solver.theta > 1 {
            return Err(CliError::Config(format!("theta must be 0 or 1, got {}", self.solver.theta)));
        }
        if !(self.solver.gamma > 0.0 && self.solver.gamma.is_finite()) {
            return Err(CliError::Config(format!("gamma must be positive, got {}", self.solver.gamma)));
        }
        if self.solver.m == Some(0) {
            return Err(CliError::Config("m must be positive".into()));
        }
        if self.solver.theta == 1 && self.solver.m.is_none() {
            return Err(CliError::Config("m is required when theta = 1".into()));
        }
        Ok(())
    }

    /// Seeds seed, seed+1, …, seed+R−1.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replications as u64)
            .map(|r| self.solver.seed.wrapping_add(r))
            .collect()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }

    /// The builtin of that name, or the JSON file it points to.
    pub fn instance_spec(&self) -> Result<InstanceSpec, CliError> {
        if let Some(spec) = builtin(&self.instance) {
            return Ok(spec);
        }
        let path = self.resolve(Path::new(&self.instance));
        let text = fs::read_to_string(&path).map_err(|e| {
            CliError::Config(format!(
                "instance `{}` is neither a builtin nor a readable file: {e}",
                self.instance
            ))
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
