use std::path::{Path, PathBuf};

use csal_core::evaluation::{Learning, SweepSettings};
use csal_core::problems::Problem;
use csal_core::{BoundParams, NoiseModel, PartitionGeometry, ProblemSpec};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub threads: usize,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub budget: Option<u64>,
    pub budgets: Option<Vec<u64>>,
    /// Defaults to the exponent the problem declares.
    pub alpha: Option<f64>,
    /// Defaults to the constant the problem declares.
    pub smoothness: Option<f64>,
    pub rho: Option<f64>,
    pub nu1: Option<f64>,
    pub nu2: Option<f64>,
    #[serde(default)]
    pub noise: NoiseModel,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default = "default_num_eval")]
    pub num_eval: usize,
    #[serde(default = "one_u32")]
    pub replicates: u32,
    #[serde(default = "default_true")]
    pub passive: bool,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_c")]
    pub c_tau0: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            num_eval: default_num_eval(),
            replicates: 1,
            passive: true,
            bootstrap: default_bootstrap(),
            c_tau0: default_c(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn one_u32() -> u32 {
    1
}

fn default_true() -> bool {
    true
}

fn default_num_eval() -> usize {
    100_000
}

fn default_bootstrap() -> usize {
    1000
}

fn default_c() -> f64 {
    1.0
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{field}`: {msg}"))
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Config after overrides, with the problem built and shared fields checked.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub probe: Box<dyn Problem>,
    pub learning: Learning,
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<Resolved, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = parse(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    resolve(config, overrides)
}

/// Parses the file and rejects keys in `[problem]` that the chosen family
/// does not use (the tagged problem table would otherwise ignore them).
pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    let raw: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    let config: ExperimentConfig = raw
        .clone()
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    let known = serde_json::to_value(&config.problem).map_err(|e| CliError::Runtime(e.to_string()))?;
    if let (Some(toml::Value::Table(given)), Some(known)) = (raw.get("problem"), known.as_object()) {
        if let Some(k) = given.keys().find(|k| !known.contains_key(*k)) {
            return Err(config_err(&format!("problem.{k}"), "unknown key for this problem family"));
        }
    }
    Ok(config)
}

pub fn resolve(config: ExperimentConfig, overrides: &Overrides) -> Result<Resolved, CliError> {
    let seed = overrides
        .seed
        .or(config.seed)
        .ok_or_else(|| config_err("seed", "missing; runs are only reproducible with an explicit seed"))?;
    let threads = overrides.threads.unwrap_or(config.threads);
    if threads == 0 {
        return Err(config_err("threads", "must be at least 1"));
    }
    let out = overrides
        .out
        .clone()
        .or_else(|| config.output.dir.clone())
        .ok_or_else(|| config_err("output.dir", "missing; pass --out or set it in the file"))?;
    let l = &config.learner;
    let probe = config
        .problem
        .build(l.noise)
        .map_err(|e| config_err("problem", e))?;
    let declared = probe.declared();
    let geometry = PartitionGeometry::dyadic(probe.dim())
        .and_then(|g| g.with_overrides(l.rho, l.nu1, l.nu2))
        .map_err(|e| config_err("learner.rho/nu1/nu2", e))?;
    let learning = Learning {
        alpha: l.alpha.unwrap_or(declared.alpha),
        smoothness: l.smoothness.unwrap_or(declared.smoothness),
        geometry,
        noise: l.noise,
    };
    if !(learning.alpha > 0.0 && learning.alpha <= 1.0) {
        return Err(config_err("learner.alpha", format!("must lie in (0, 1], got {}", learning.alpha)));
    }
    if !(learning.smoothness > 0.0 && learning.smoothness.is_finite()) {
        return Err(config_err("learner.smoothness", format!("must be positive, got {}", learning.smoothness)));
    }
    if let Some(budgets) = &l.budgets {
        if budgets.is_empty() || budgets.contains(&0) {
            return Err(config_err("budgets", "must be a non-empty list of positive integers"));
        }
        if let Some(w) = budgets.windows(2).find(|w| w[0] >= w[1]) {
            return Err(config_err("budgets", format!("must be strictly increasing, found {} then {}", w[0], w[1])));
        }
    }
    if config.evaluation.num_eval == 0 {
        return Err(config_err("evaluation.num_eval", "must be at least 1"));
    }
    Ok(Resolved { config, seed, threads, out, probe, learning })
}

impl Resolved {
    pub fn run_params(&self) -> Result<BoundParams, CliError> {
        let n = self
            .config
            .learner
            .budget
            .ok_or_else(|| config_err("learner.budget", "missing"))?;
        if n == 0 {
            return Err(config_err("learner.budget", "must be at least 1"));
        }
        BoundParams::new(
            n,
            self.probe.num_labels(),
            self.learning.alpha,
            self.learning.smoothness,
            self.learning.geometry,
        )
        .map_err(|e| config_err("learner", e))
    }

    pub fn sweep_settings(&self) -> Result<SweepSettings, CliError> {
        let budgets = self
            .config
            .learner
            .budgets
            .clone()
            .ok_or_else(|| config_err("budgets", "missing"))?;
        if budgets.len() < 3 {
            return Err(config_err("budgets", format!("need at least 3 budgets, got {}", budgets.len())));
        }
        let ev = &self.config.evaluation;
        if ev.replicates == 0 {
            return Err(config_err("evaluation.replicates", "must be at least 1"));
        }
        Ok(SweepSettings {
            budgets,
            replicates: ev.replicates,
            base_seed: self.seed,
            num_eval: ev.num_eval,
            learning: self.learning.clone(),
            include_passive: ev.passive,
            bootstrap_resamples: ev.bootstrap,
            c_tau0: ev.c_tau0,
            threads: self.threads,
        })
    }
}
