//! Study configuration files.
//!
//! A config is a single JSON object. Unknown keys are rejected at every level
//! so that a misspelled option fails loudly instead of silently using a default.

use std::path::{Path, PathBuf};
use std::time::Duration;

use nrbo_core::bench::SyntheticObjective;
use nrbo_core::{OptimizerConfig, ScheduleConfig, SearchSpace, Variant};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

fn core_defaults() -> OptimizerConfig {
    OptimizerConfig::new(SearchSpace::unit(1).expect("unit space"), Variant::NrboFull, 1)
}

fn default_init_count() -> usize {
    core_defaults().init_count
}

fn default_batch_size() -> usize {
    core_defaults().batch_size
}

fn default_grid_points() -> usize {
    core_defaults().grid_points_per_dim
}

fn default_gp_restarts() -> usize {
    core_defaults().gp_restarts
}

fn default_kappa() -> f64 {
    core_defaults().kappa
}

fn default_true() -> bool {
    true
}

fn default_objective_key() -> String {
    "objective".to_string()
}

/// Schedule constants; the iteration count always comes from the budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadiiSection {
    pub sigma1_base: f64,
    pub sigma1_span: f64,
    pub sigma2_base: f64,
    pub sigma2_span: f64,
}

impl Default for RadiiSection {
    fn default() -> Self {
        let s = ScheduleConfig::with_budget(1);
        Self {
            sigma1_base: s.sigma1_base,
            sigma1_span: s.sigma1_span,
            sigma2_base: s.sigma2_base,
            sigma2_span: s.sigma2_span,
        }
    }
}

impl RadiiSection {
    pub fn schedule(&self, budget: usize) -> ScheduleConfig {
        ScheduleConfig {
            sigma1_base: self.sigma1_base,
            sigma1_span: self.sigma1_span,
            sigma2_base: self.sigma2_base,
            sigma2_span: self.sigma2_span,
            total_iterations: budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub variant: Variant,
    pub budget: usize,
    #[serde(default = "default_init_count")]
    pub init_count: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub schedule: RadiiSection,
    #[serde(default = "default_grid_points")]
    pub grid_points_per_dim: usize,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_gp_restarts")]
    pub gp_restarts: usize,
    #[serde(default = "default_true")]
    pub density_reward: bool,
}

impl OptimizerSection {
    pub fn to_config(&self, space: SearchSpace) -> OptimizerConfig {
        OptimizerConfig {
            init_count: self.init_count,
            batch_size: self.batch_size,
            schedule: self.schedule.schedule(self.budget),
            grid_points_per_dim: self.grid_points_per_dim,
            gp_restarts: self.gp_restarts,
            kappa: self.kappa,
            rng_seed: self.seed,
            density_reward: self.density_reward,
            ..OptimizerConfig::new(space, self.variant, self.budget)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSection {
    /// A synthetic landscape evaluated on the normalized point.
    Builtin {
        name: String,
        #[serde(default)]
        noise: f64,
    },
    /// A program speaking the line protocol in [`crate::external`].
    External {
        command: Vec<String>,
        /// Dotted path to the objective inside the reply object.
        #[serde(default = "default_objective_key")]
        objective_key: String,
        timeout_secs: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Minimize,
    Maximize,
}

impl Direction {
    /// Maps a reported objective to the engine's lower-is-better value.
    pub fn to_internal(self, objective: f64) -> f64 {
        match self {
            Direction::Minimize => objective,
            Direction::Maximize => -objective,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub study: String,
    pub space: SearchSpace,
    pub optimizer: OptimizerSection,
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub direction: Direction,
    pub output_dir: PathBuf,
}

/// Objective resolved from a config.
#[derive(Debug, Clone)]
pub enum Objective {
    Builtin(SyntheticObjective),
    External { command: Vec<String>, objective_key: String, timeout: Duration },
}

impl RunConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses and validates a config document.
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.study.trim().is_empty() {
            return Err(CliError::Config("`study` must not be empty".into()));
        }
        self.optimizer_config(None)?;
        self.resolve_objective()?;
        Ok(())
    }

    /// Engine config with an optional seed override.
    pub fn optimizer_config(&self, seed: Option<u64>) -> CliResult<OptimizerConfig> {
        let mut cfg = self.optimizer.to_config(self.space.clone());
        if let Some(s) = seed {
            cfg.rng_seed = s;
        }
        cfg.validate().map_err(|e| CliError::Config(format!("optimizer: {e}")))?;
        Ok(cfg)
    }

    pub fn resolve_objective(&self) -> CliResult<Objective> {
        match &self.objective {
            ObjectiveSection::Builtin { name, noise } => {
                let obj = SyntheticObjective::by_name(name, self.space.dim(), *noise)
                    .map_err(|e| CliError::Config(format!("objective: {e}")))?;
                if obj.dimension != self.space.dim() {
                    return Err(CliError::Config(format!(
                        "objective: `{name}` is {}-dimensional but the space has {} dimensions",
                        obj.dimension,
                        self.space.dim()
                    )));
                }
                Ok(Objective::Builtin(obj))
            }
            ObjectiveSection::External { command, objective_key, timeout_secs } => {
                if command.is_empty() || command[0].is_empty() {
                    return Err(CliError::Config("objective.command must name a program".into()));
                }
                if objective_key.split('.').any(str::is_empty) {
                    return Err(CliError::Config(format!(
                        "objective.objective_key `{objective_key}` is not a dotted key path"
                    )));
                }
                if !(timeout_secs.is_finite() && *timeout_secs > 0.0) {
                    return Err(CliError::Config(format!(
                        "objective.timeout_secs must be positive, got {timeout_secs}"
                    )));
                }
                Ok(Objective::External {
                    command: command.clone(),
                    objective_key: objective_key.clone(),
                    timeout: Duration::from_secs_f64(*timeout_secs),
                })
            }
        }
    }

    /// Everything that determines the trial sequence; stored in the log header.
    pub fn settings(&self, seed: Option<u64>) -> Value {
        let mut optimizer = self.optimizer.clone();
        if let Some(s) = seed {
            optimizer.seed = s;
        }
        json!({
            "study": self.study,
            "space": self.space,
            "optimizer": optimizer,
            "objective": self.objective,
            "direction": self.direction,
        })
    }
}

/// Leaf-level differences between two JSON documents, as `path: left != right` lines.
pub fn diff_values(left: &Value, right: &Value) -> Vec<String> {
    let mut out = Vec::new();
    diff_into(left, right, String::new(), &mut out);
    out
}

fn diff_into(left: &Value, right: &Value, path: String, out: &mut Vec<String>) {
    let child = |key: &str| if path.is_empty() { key.to_string() } else { format!("{path}.{key}") };
    match (left, right) {
        (Value::Object(a), Value::Object(b)) => {
            let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
            keys.sort();
            keys.dedup();
            for k in keys {
                let (l, r) = (a.get(k).unwrap_or(&Value::Null), b.get(k).unwrap_or(&Value::Null));
                diff_into(l, r, child(k), out);
            }
        }
        (Value::Array(a), Value::Array(b)) if a.len() == b.len() => {
            for (i, (l, r)) in a.iter().zip(b).enumerate() {
                diff_into(l, r, child(&i.to_string()), out);
            }
        }
        _ if left != right => {
            out.push(format!("{}: {left} != {right}", if path.is_empty() { "<root>" } else { &path }))
        }
        _ => {}
    }
}
