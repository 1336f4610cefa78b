//! Benchmark matrices over the builtin objectives.

use std::path::Path;

use nrbo_core::bench::{
    mean_std, run_matrix, summarize, surrogate_robustness, RunRecord, ScoreSummary, SyntheticObjective,
};
use nrbo_core::{OptimizerConfig, Variant};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RadiiSection;
use crate::error::{CliError, CliResult};

pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const SUMMARIES_FILE: &str = "summaries.json";
pub const RECORDS_FILE: &str = "records.json";
pub const ROBUSTNESS_FILE: &str = "robustness.csv";

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub name: String,
    #[serde(default)]
    pub noise: f64,
    /// Only used by `sphere`.
    #[serde(default = "two")]
    pub dimension: usize,
}

fn default_noise_levels() -> Vec<f64> {
    vec![0.0, 0.4, 0.8]
}

fn default_n_train() -> usize {
    60
}

fn default_radius() -> f64 {
    0.1
}

fn default_robustness_seeds() -> Vec<u64> {
    (0..20).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessSpec {
    #[serde(default = "default_noise_levels")]
    pub noise_levels: Vec<f64>,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_robustness_seeds")]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub objectives: Vec<ObjectiveSpec>,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub init_count: Option<usize>,
    pub batch_size: Option<usize>,
    pub grid_points_per_dim: Option<usize>,
    pub gp_restarts: Option<usize>,
    pub kappa: Option<f64>,
    pub density_reward: Option<bool>,
    #[serde(default)]
    pub schedule: RadiiSection,
    pub robustness: Option<RobustnessSpec>,
}

/// Mean RMSEs over the robustness seeds at one noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub noise_level: f64,
    pub rmse_plain: f64,
    pub rmse_regularized: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub records: Vec<RunRecord>,
    pub summaries: Vec<ScoreSummary>,
    pub robustness: Vec<RobustnessRow>,
}

impl MatrixConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn objectives(&self) -> CliResult<Vec<SyntheticObjective>> {
        self.objectives
            .iter()
            .map(|o| {
                SyntheticObjective::by_name(&o.name, o.dimension, o.noise)
                    .map_err(|e| CliError::Config(format!("objectives: {e}")))
            })
            .collect()
    }

    /// Engine settings shared by every run; space, variant and seed are filled per run.
    pub fn template(&self) -> OptimizerConfig {
        let mut t =
            OptimizerConfig::new(nrbo_core::SearchSpace::unit(2).expect("unit space"), Variant::NrboFull, self.budget);
        t.schedule = self.schedule.schedule(self.budget);
        if let Some(v) = self.init_count {
            t.init_count = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.grid_points_per_dim {
            t.grid_points_per_dim = v;
        }
        if let Some(v) = self.gp_restarts {
            t.gp_restarts = v;
        }
        if let Some(v) = self.kappa {
            t.kappa = v;
        }
        if let Some(v) = self.density_reward {
            t.density_reward = v;
        }
        t
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.objectives.is_empty() {
            return Err(CliError::Config("`objectives` must not be empty".into()));
        }
        if self.variants.is_empty() {
            return Err(CliError::Config("`variants` must not be empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("`seeds` must not be empty".into()));
        }
        let template = self.template();
        for obj in self.objectives()? {
            for &variant in &self.variants {
                let cfg = OptimizerConfig { space: obj.space(), variant, ..template.clone() };
                cfg.validate().map_err(|e| CliError::Config(format!("{} / {variant}: {e}", obj.name)))?;
            }
        }
        if let Some(r) = &self.robustness {
            if r.noise_levels.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                return Err(CliError::Config("robustness.noise_levels must be finite and >= 0".into()));
            }
            if r.n_train < 10 {
                return Err(CliError::Config(format!("robustness.n_train must be at least 10, got {}", r.n_train)));
            }
            if !(r.radius.is_finite() && r.radius >= 0.0) {
                return Err(CliError::Config(format!("robustness.radius must be >= 0, got {}", r.radius)));
            }
            if r.seeds.is_empty() {
                return Err(CliError::Config("robustness.seeds must not be empty".into()));
            }
        }
        Ok(())
    }
}

/// Runs the matrix on the current rayon pool and writes all report files.
///
/// Files are written even when some runs fail; the error then reports the
/// first failure.
pub fn run_bench(cfg: &MatrixConfig, out_dir: &Path) -> CliResult<BenchReport> {
    cfg.validate()?;
    let objectives = cfg.objectives()?;
    let records = run_matrix(&objectives, &cfg.variants, &cfg.seeds, &cfg.template())?;
    let summaries = summarize(&records, &objectives);
    let robustness = match &cfg.robustness {
        Some(r) => robustness_table(r)?,
        None => Vec::new(),
    };

    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    write_trajectories(&records, &out_dir.join(TRAJECTORIES_FILE))?;
    write_json(&summaries, &out_dir.join(SUMMARIES_FILE))?;
    write_json(&records, &out_dir.join(RECORDS_FILE))?;
    if cfg.robustness.is_some() {
        let path = out_dir.join(ROBUSTNESS_FILE);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        for row in &robustness {
            w.serialize(row).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(CliError::io(&path))?;
    }

    if let Some(bad) = records.iter().find(|r| r.error.is_some()) {
        return Err(CliError::Numerical(format!(
            "{} / {} / seed {}: {}",
            bad.objective,
            bad.variant,
            bad.seed,
            bad.error.as_deref().unwrap_or_default()
        )));
    }
    Ok(BenchReport { records, summaries, robustness })
}

pub fn robustness_table(spec: &RobustnessSpec) -> CliResult<Vec<RobustnessRow>> {
    spec.noise_levels
        .iter()
        .map(|&eps| {
            let pairs = spec
                .seeds
                .par_iter()
                .map(|&s| surrogate_robustness(eps, spec.n_train, spec.radius, s))
                .collect::<nrbo_core::Result<Vec<_>>>()?;
            let plain: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let reg: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            Ok(RobustnessRow { noise_level: eps, rmse_plain: mean_std(&plain).0, rmse_regularized: mean_std(&reg).0 })
        })
        .collect()
}

#[derive(Serialize)]
struct TrajectoryRow<'a> {
    objective: &'a str,
    variant: Variant,
    seed: u64,
    iteration: usize,
    best_so_far: f64,
}

fn write_trajectories(records: &[RunRecord], path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in records {
        for t in &r.trajectory {
            let row = TrajectoryRow {
                objective: &r.objective,
                variant: r.variant,
                seed: r.seed,
                iteration: t.iteration,
                best_so_far: t.best_so_far,
            };
            w.serialize(row).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(CliError::io(path))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(CliError::io(path))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Io { path: path.to_path_buf(), source: std::io::Error::other(e) }
}
