//! Synthetic noisy objectives and the comparison harness.
//!
//! Objectives are defined on the unit hypercube and returned in the
//! minimization convention. Observation noise for trial `k` of a run with
//! seed `s` is a pure function of `(s, k)`, so variants compared under the
//! same seed see the same noise stream and differ only in where they sample.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, OptimizerConfig, Variant};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::space::{Point, SearchSpace};
use crate::surrogate::Surrogate;

const NOISE_SALT: u64 = 0x006e_6f69_7365;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Landscape {
    /// `-(sin 2πx + cos 2πy)`, minimum −2 at (0.25, 0).
    SinCos2d,
    /// Branin–Hoo rescaled from [−5, 10] × [0, 15].
    Branin,
    /// Squared distance to (0.3, …, 0.3).
    Sphere,
}

impl Landscape {
    pub fn as_str(&self) -> &'static str {
        match self {
            Landscape::SinCos2d => "sincos2d",
            Landscape::Branin => "branin",
            Landscape::Sphere => "sphere",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticObjective {
    pub name: String,
    pub landscape: Landscape,
    pub dimension: usize,
    pub noise_level: f64,
    pub true_optimum: f64,
    pub rng_seed: u64,
}

impl SyntheticObjective {
    pub fn sincos2d(noise_level: f64) -> Self {
        Self::build(Landscape::SinCos2d, 2, noise_level)
    }

    pub fn branin(noise_level: f64) -> Self {
        Self::build(Landscape::Branin, 2, noise_level)
    }

    pub fn sphere(dimension: usize, noise_level: f64) -> Self {
        Self::build(Landscape::Sphere, dimension, noise_level)
    }

    /// Looks up a builtin by name; `dimension` only matters for `sphere`.
    pub fn by_name(name: &str, dimension: usize, noise_level: f64) -> Result<Self> {
        if !(noise_level.is_finite() && noise_level >= 0.0) {
            return Err(Error::Domain(format!("noise level must be >= 0, got {noise_level}")));
        }
        match name {
            "sincos2d" => Ok(Self::sincos2d(noise_level)),
            "branin" => Ok(Self::branin(noise_level)),
            "sphere" if dimension >= 1 => Ok(Self::sphere(dimension, noise_level)),
            _ => Err(Error::Domain(format!("unknown builtin objective `{name}`"))),
        }
    }

    fn build(landscape: Landscape, dimension: usize, noise_level: f64) -> Self {
        let true_optimum = match landscape {
            Landscape::SinCos2d => -2.0,
            Landscape::Branin => 5.0 / (4.0 * std::f64::consts::PI),
            Landscape::Sphere => 0.0,
        };
        Self { name: landscape.as_str().to_string(), landscape, dimension, noise_level, true_optimum, rng_seed: 0 }
    }

    pub fn space(&self) -> SearchSpace {
        SearchSpace::unit(self.dimension).expect("builtin objectives have dimension >= 1")
    }

    /// A known global minimizer.
    pub fn argmin(&self) -> Point {
        let coords = match self.landscape {
            Landscape::SinCos2d => vec![0.25, 0.0],
            Landscape::Branin => vec![(5.0 - std::f64::consts::PI) / 15.0, 12.275 / 15.0],
            Landscape::Sphere => vec![0.3; self.dimension],
        };
        Point::new(coords).expect("argmin lies in the unit cube")
    }

    pub fn noiseless(&self, p: &Point) -> f64 {
        use std::f64::consts::PI;
        let c = p.coords();
        match self.landscape {
            Landscape::SinCos2d => -((2.0 * PI * c[0]).sin() + (2.0 * PI * c[1]).cos()),
            Landscape::Branin => {
                let (x1, x2) = (15.0 * c[0] - 5.0, 15.0 * c[1]);
                let b = 5.1 / (4.0 * PI * PI);
                let t = x2 - b * x1 * x1 + 5.0 / PI * x1 - 6.0;
                t * t + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * x1.cos() + 10.0
            }
            Landscape::Sphere => c.iter().map(|x| (x - 0.3) * (x - 0.3)).sum(),
        }
    }

    /// Noiseless value plus `noise_level` times a standard normal drawn from `draw_seed`.
    pub fn eval(&self, p: &Point, draw_seed: u64) -> Result<f64> {
        if p.dim() != self.dimension {
            return Err(Error::Domain(format!(
                "objective `{}` is {}-dimensional, point has {}",
                self.name,
                self.dimension,
                p.dim()
            )));
        }
        let mut value = self.noiseless(p);
        if self.noise_level > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
            let z: f64 = StandardNormal.sample(&mut rng);
            value += self.noise_level * z;
        }
        Ok(value)
    }

    /// Draw seed for trial `trial_index` of a run seeded with `run_seed`.
    pub fn draw_seed(&self, run_seed: u64, trial_index: usize) -> u64 {
        derive_seed(run_seed, &[NOISE_SALT, self.rng_seed, trial_index as u64])
    }
}

/// One trial of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub iteration: usize,
    pub point: Vec<f64>,
    pub raw_value: f64,
    pub best_so_far: f64,
    pub sigma1_now: f64,
    pub sigma2_now: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub objective: String,
    pub noise_level: f64,
    pub variant: Variant,
    pub seed: u64,
    pub init_count: usize,
    pub budget: usize,
    pub batch_size: usize,
    pub trajectory: Vec<TrajectoryEntry>,
    pub wall_time_secs: f64,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn final_best(&self) -> Option<f64> {
        self.trajectory.last().map(|t| t.best_so_far)
    }

    /// Noiseless objective value at the trial with the best observed value.
    pub fn final_best_true(&self, objective: &SyntheticObjective) -> Option<f64> {
        let best = self.trajectory.iter().reduce(|a, b| if b.raw_value < a.raw_value { b } else { a })?;
        Point::new(best.point.clone()).ok().map(|p| objective.noiseless(&p))
    }
}

/// Runs one optimization to completion against a synthetic objective.
///
/// The config's `variant` and `rng_seed` are used as given. Failures are
/// recorded in the returned record rather than propagated.
pub fn run_single(objective: &SyntheticObjective, cfg: &OptimizerConfig) -> RunRecord {
    let start = Instant::now();
    let mut record = RunRecord {
        objective: objective.name.clone(),
        noise_level: objective.noise_level,
        variant: cfg.variant,
        seed: cfg.rng_seed,
        init_count: cfg.init_count,
        budget: cfg.budget,
        batch_size: cfg.batch_size,
        trajectory: Vec::new(),
        wall_time_secs: 0.0,
        error: None,
    };
    if let Err(e) = drive(objective, cfg, &mut record.trajectory) {
        record.error = Some(e.to_string());
    }
    record.wall_time_secs = start.elapsed().as_secs_f64();
    record
}

fn drive(objective: &SyntheticObjective, cfg: &OptimizerConfig, out: &mut Vec<TrajectoryEntry>) -> Result<()> {
    if cfg.space.dim() != objective.dimension {
        return Err(Error::Domain(format!(
            "space has {} dimensions, objective `{}` has {}",
            cfg.space.dim(),
            objective.name,
            objective.dimension
        )));
    }
    let mut engine = Engine::new(cfg.clone())?;
    let mut best = f64::INFINITY;
    while !engine.is_finished() {
        let points = engine.ask()?;
        let iteration = if engine.observations().is_empty() { 0 } else { engine.state().iteration + 1 };
        let sched = engine.schedule_snapshot().expect("snapshot set by ask");
        let mut results = Vec::with_capacity(points.len());
        for p in points {
            let value = objective.eval(&p, objective.draw_seed(cfg.rng_seed, out.len()))?;
            best = best.min(value);
            out.push(TrajectoryEntry {
                iteration,
                point: p.coords().to_vec(),
                raw_value: value,
                best_so_far: best,
                sigma1_now: sched.sigma1_now,
                sigma2_now: sched.sigma2_now,
            });
            results.push((p, value));
        }
        engine.tell(&results)?;
    }
    Ok(())
}

/// One run per (objective, variant, seed), in that nesting order.
///
/// Runs execute on the current rayon pool; output order is deterministic.
pub fn run_matrix(
    objectives: &[SyntheticObjective],
    variants: &[Variant],
    seeds: &[u64],
    template: &OptimizerConfig,
) -> Result<Vec<RunRecord>> {
    if objectives.is_empty() || variants.is_empty() || seeds.is_empty() {
        return Err(Error::Domain("run matrix needs objectives, variants and seeds".into()));
    }
    let mut jobs = Vec::new();
    for obj in objectives {
        for &variant in variants {
            for &seed in seeds {
                let mut cfg = template.clone();
                cfg.space = obj.space();
                cfg.variant = variant;
                cfg.rng_seed = seed;
                jobs.push((obj, cfg));
            }
        }
    }
    Ok(jobs.into_par_iter().map(|(obj, cfg)| run_single(obj, &cfg)).collect())
}

/// Mean final gap to the optimum relative to the random-search gap.
///
/// 1 means random-search parity and 0 means every run reached the optimum.
pub fn normalized_mean_score(records: &[RunRecord], baseline: &[RunRecord], true_optimum: f64) -> Result<f64> {
    let gap = |r: &RunRecord| {
        r.final_best()
            .map(|b| b - true_optimum)
            .ok_or_else(|| Error::State(format!("run {} / seed {} has no trials", r.variant, r.seed)))
    };
    if records.is_empty() || baseline.is_empty() {
        return Err(Error::Domain("normalized score needs runs and baseline runs".into()));
    }
    let base = baseline.iter().map(gap).collect::<Result<Vec<_>>>()?;
    let gaps = records.iter().map(gap).collect::<Result<Vec<_>>>()?;
    if base.iter().sum::<f64>() == 0.0 {
        return Err(Error::UndefinedScore);
    }
    Ok(ratio_of_means(&gaps, &base))
}

/// Double-double accumulator; enough to make ratios of short sums correctly rounded.
#[derive(Clone, Copy)]
struct Dd(f64, f64);

impl Dd {
    fn sum(v: &[f64]) -> Dd {
        v.iter().fold(Dd(0.0, 0.0), |Dd(hi, lo), &x| {
            let s = hi + x;
            let bp = s - hi;
            let err = (hi - (s - bp)) + (x - bp);
            let lo = lo + err;
            let t = s + lo;
            Dd(t, lo - (t - s))
        })
    }

    fn scale(self, k: f64) -> Dd {
        let p = self.0 * k;
        let err = self.0.mul_add(k, -p);
        let lo = err + self.1 * k;
        let t = p + lo;
        Dd(t, lo - (t - p))
    }

    fn div(self, b: Dd) -> f64 {
        let q = self.0 / b.0;
        let r = (q.mul_add(-b.0, self.0) + self.1 - q * b.1) / b.0;
        q + r
    }
}

/// `mean(a) / mean(b)` evaluated as `(sum(a) * |b|) / (sum(b) * |a|)` in double-double.
fn ratio_of_means(a: &[f64], b: &[f64]) -> f64 {
    let num = Dd::sum(a).scale(b.len() as f64);
    let den = Dd::sum(b).scale(a.len() as f64);
    num.div(den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub objective: String,
    pub variant: Variant,
    pub mean_best: f64,
    pub std_best: f64,
    /// Present when random-search runs on the same objective are available.
    pub normalized_mean_score: Option<f64>,
    pub runs: usize,
    pub seeds: Vec<u64>,
}

/// Per (objective, variant) summaries over successful runs, in first-seen order.
pub fn summarize(records: &[RunRecord], objectives: &[SyntheticObjective]) -> Vec<ScoreSummary> {
    let mut keys: Vec<(String, Variant)> = Vec::new();
    for r in records {
        let k = (r.objective.clone(), r.variant);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(objective, variant)| {
            let runs: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.objective == objective && r.variant == variant && r.error.is_none())
                .collect();
            let bests: Vec<f64> = runs.iter().filter_map(|r| r.final_best()).collect();
            let (mean_best, std_best) = mean_std(&bests);
            let baseline: Vec<RunRecord> = records
                .iter()
                .filter(|r| r.objective == objective && r.variant == Variant::RandomSearch && r.error.is_none())
                .cloned()
                .collect();
            let owned: Vec<RunRecord> = runs.iter().map(|r| (*r).clone()).collect();
            let normalized_mean_score = objectives
                .iter()
                .find(|o| o.name == objective)
                .filter(|_| !baseline.is_empty() && !owned.is_empty())
                .and_then(|o| normalized_mean_score(&owned, &baseline, o.true_optimum).ok());
            ScoreSummary {
                objective,
                variant,
                mean_best,
                std_best,
                normalized_mean_score,
                runs: runs.len(),
                seeds: runs.iter().map(|r| r.seed).collect(),
            }
        })
        .collect()
}

/// Sample mean and (n−1) standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// RMSE of a plain GP and of a GP on neighbor-smoothed targets, both against
/// the noiseless sin/cos surface on a 50×50 grid.
pub fn surrogate_robustness(noise_level: f64, n_train: usize, radius: f64, seed: u64) -> Result<(f64, f64)> {
    if n_train < 10 {
        return Err(Error::Domain(format!("n_train must be at least 10, got {n_train}")));
    }
    let objective = SyntheticObjective::sincos2d(noise_level);
    let space = objective.space();
    let points = space.sample_uniform(n_train, derive_seed(seed, &[1]))?;
    let mut obs = crate::dataset::ObservationSet::new();
    for (k, p) in points.iter().enumerate() {
        let y = objective.eval(p, objective.draw_seed(seed, k))?;
        obs.push(crate::dataset::Trial { point: p.clone(), raw_value: y, iteration: 0 })?;
    }
    let fit_seed = derive_seed(seed, &[2]);
    let plain = Surrogate::fit(&points, &obs.raw_values(), 4, fit_seed)?;
    let regularized = Surrogate::fit(&points, &obs.smooth(radius)?.values(), 4, fit_seed)?;

    let grid = space.meshgrid(50, usize::MAX)?;
    let truth: Vec<f64> = grid.iter().map(|p| objective.noiseless(p)).collect();
    let rmse = |s: &Surrogate| {
        let preds = s.predict_batch(&grid);
        let sse: f64 = preds.iter().zip(&truth).map(|(p, t)| (p.mean - t).powi(2)).sum();
        (sse / grid.len() as f64).sqrt()
    };
    Ok((rmse(&plain), rmse(&regularized)))
}
