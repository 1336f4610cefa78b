//! Ask/tell optimizer.
//!
//! A run starts with `init_count` seeded uniform points, then performs
//! `budget` suggestion rounds of `batch_size` points each. Every round refits
//! the surrogate from scratch on either the raw or the neighbor-smoothed
//! observations, depending on the [`Variant`].
//!
//! All randomness is derived from `rng_seed` and the round index, so two
//! engines with equal configs that are told equal values propose equal points.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::acquisition::{adjust, density_rewards, expected_improvement, select_batch, AcqScores, DensityReward};
use crate::dataset::{ObservationSet, Trial};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::schedule::{ScheduleConfig, ScheduleState};
use crate::space::{Point, SearchSpace, DEFAULT_GRID_CAP};
use crate::surrogate::Surrogate;

/// Number of random candidates scored when the meshgrid would exceed its cap.
pub const FALLBACK_CANDIDATES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    RandomSearch,
    /// GP on raw observations, EI argmax over the grid.
    PlainBo,
    /// GP on raw observations, three-objective ensemble without density reward.
    EnsembleBo,
    /// Smoothed observations at the scheduled radius, no density reward.
    NrboNoDensity,
    /// Smoothing and density reward with radii frozen at their initial values.
    NrboStatic,
    NrboFull,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::RandomSearch,
        Variant::PlainBo,
        Variant::EnsembleBo,
        Variant::NrboNoDensity,
        Variant::NrboStatic,
        Variant::NrboFull,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::RandomSearch => "random_search",
            Variant::PlainBo => "plain_bo",
            Variant::EnsembleBo => "ensemble_bo",
            Variant::NrboNoDensity => "nrbo_no_density",
            Variant::NrboStatic => "nrbo_static",
            Variant::NrboFull => "nrbo_full",
        }
    }

    pub fn is_model_based(&self) -> bool {
        *self != Variant::RandomSearch
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub space: SearchSpace,
    pub init_count: usize,
    /// Suggestion rounds after initialization.
    pub budget: usize,
    pub batch_size: usize,
    pub schedule: ScheduleConfig,
    pub grid_points_per_dim: usize,
    pub grid_cap: usize,
    pub gp_restarts: usize,
    pub kappa: f64,
    pub rng_seed: u64,
    pub variant: Variant,
    /// When false the density reward is forced to 1 for every variant.
    pub density_reward: bool,
}

impl OptimizerConfig {
    pub fn new(space: SearchSpace, variant: Variant, budget: usize) -> Self {
        Self {
            space,
            init_count: 5,
            budget,
            batch_size: 1,
            schedule: ScheduleConfig::with_budget(budget.max(1)),
            grid_points_per_dim: 30,
            grid_cap: DEFAULT_GRID_CAP,
            gp_restarts: 4,
            kappa: 2.0,
            rng_seed: 0,
            variant,
            density_reward: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Domain("budget must be at least 1".into()));
        }
        if self.batch_size == 0 || self.batch_size > self.budget {
            return Err(Error::Domain(format!(
                "batch_size must be in [1, budget = {}], got {}",
                self.budget, self.batch_size
            )));
        }
        if self.init_count == 0 || (self.variant.is_model_based() && self.init_count < 2) {
            return Err(Error::Domain(format!(
                "init_count must be at least {} for {}",
                if self.variant.is_model_based() { 2 } else { 1 },
                self.variant
            )));
        }
        self.schedule.validate()?;
        if self.schedule.total_iterations != self.budget {
            return Err(Error::Domain(format!(
                "schedule spans {} iterations but the budget is {}",
                self.schedule.total_iterations, self.budget
            )));
        }
        if self.grid_points_per_dim < 2 {
            return Err(Error::Domain("grid_points_per_dim must be at least 2".into()));
        }
        if self.gp_restarts == 0 {
            return Err(Error::Domain("gp_restarts must be at least 1".into()));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Domain(format!("kappa must be positive, got {}", self.kappa)));
        }
        Ok(())
    }

    /// Radii used by this variant at round `i`, or `None` where a mechanism is off.
    fn radii(&self, i: usize) -> Result<(Option<f64>, Option<f64>, ScheduleState)> {
        let sched = match self.variant {
            Variant::NrboStatic => self.schedule.frozen(),
            _ => self.schedule,
        };
        let state = sched.state_at(i)?;
        let (smooth, reward) = match self.variant {
            Variant::RandomSearch | Variant::PlainBo | Variant::EnsembleBo => (None, None),
            Variant::NrboNoDensity => (Some(state.sigma1_now), None),
            Variant::NrboStatic | Variant::NrboFull => (Some(state.sigma1_now), Some(state.sigma2_now)),
        };
        let reward = reward.filter(|_| self.density_reward);
        Ok((smooth, reward, state))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initializing,
    Suggesting,
    AwaitingObservation,
    Finished,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    pub phase: Phase,
    pub obs: ObservationSet,
    pub pending: Vec<Point>,
    /// Completed suggestion rounds.
    pub iteration: usize,
}

#[derive(Debug, Clone)]
pub struct Engine {
    cfg: OptimizerConfig,
    state: EngineState,
    grid: Option<Vec<Point>>,
    schedule_now: Option<ScheduleState>,
}

impl Engine {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = match cfg.space.meshgrid(cfg.grid_points_per_dim, cfg.grid_cap) {
            Ok(g) => Some(g),
            Err(Error::GridBudget { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            cfg,
            state: EngineState {
                phase: Phase::Initializing,
                obs: ObservationSet::new(),
                pending: Vec::new(),
                iteration: 0,
            },
            grid,
            schedule_now: None,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.state.obs
    }

    pub fn pending(&self) -> &[Point] {
        &self.state.pending
    }

    /// Radii that produced the pending (or most recent) suggestions.
    pub fn schedule_snapshot(&self) -> Option<ScheduleState> {
        self.schedule_now
    }

    pub fn is_finished(&self) -> bool {
        self.state.phase == Phase::Finished
    }

    pub fn ask(&mut self) -> Result<Vec<Point>> {
        let points = match self.state.phase {
            Phase::Initializing => {
                let mut rng = stream_rng(self.cfg.rng_seed, Stream::Init, 0);
                self.schedule_now = Some(self.cfg.radii(0)?.2);
                self.cfg.space.sample_with(&mut rng, self.cfg.init_count)
            }
            Phase::Suggesting => self.propose()?,
            Phase::AwaitingObservation => return Err(Error::State("ask called while observations are pending".into())),
            Phase::Finished => return Err(Error::State("budget exhausted".into())),
        };
        self.state.pending = points.clone();
        self.state.phase = Phase::AwaitingObservation;
        Ok(points)
    }

    fn propose(&mut self) -> Result<Vec<Point>> {
        let i = self.state.iteration;
        let seed = self.cfg.rng_seed;
        let batch = self.cfg.batch_size;
        let (smooth_radius, reward_radius, snapshot) = self.cfg.radii(i)?;
        self.schedule_now = Some(snapshot);

        if self.cfg.variant == Variant::RandomSearch {
            let mut rng = stream_rng(seed, Stream::Random, i as u64);
            return Ok(self.cfg.space.sample_with(&mut rng, batch));
        }

        let obs = &self.state.obs;
        let points = obs.points();
        let targets = match smooth_radius {
            Some(r) => obs.smooth(r)?.values(),
            None => obs.raw_values(),
        };
        let surrogate = Surrogate::fit(&points, &targets, self.cfg.gp_restarts, derive_seed(seed, &[i as u64]))?;
        let incumbent = targets.iter().cloned().fold(f64::INFINITY, f64::min);

        let fallback;
        let candidates: &[Point] = match &self.grid {
            Some(g) => g,
            None => {
                let mut rng = stream_rng(seed, Stream::Candidates, i as u64);
                fallback = self.cfg.space.sample_with(&mut rng, FALLBACK_CANDIDATES);
                &fallback
            }
        };
        if batch > candidates.len() {
            return Err(Error::Domain(format!("batch of {batch} exceeds {} candidates", candidates.len())));
        }
        let preds = surrogate.predict_batch(candidates);

        let chosen = if self.cfg.variant == Variant::PlainBo {
            let ei: Vec<f64> = preds.iter().map(|p| expected_improvement(p, incumbent)).collect();
            let mut order: Vec<usize> = (0..ei.len()).collect();
            // Stable sort keeps grid order among ties.
            order.sort_by(|&a, &b| ei[b].total_cmp(&ei[a]));
            order.truncate(batch);
            order
        } else {
            let scores = AcqScores::from_predictions(&preds, incumbent, self.cfg.kappa);
            let reward = match reward_radius {
                Some(r) => density_rewards(obs, candidates, r)?,
                None => DensityReward::uniform(candidates.len()),
            };
            let objs = adjust(&scores, &reward)?;
            let mut rng = stream_rng(seed, Stream::Select, i as u64);
            select_batch(&objs, batch, &mut rng)?
        };
        Ok(chosen.into_iter().map(|k| candidates[k].clone()).collect())
    }

    /// Records objective values for the pending points, in the order asked.
    pub fn tell(&mut self, results: &[(Point, f64)]) -> Result<()> {
        if self.state.phase != Phase::AwaitingObservation {
            return Err(Error::State("tell called without pending suggestions".into()));
        }
        if results.len() != self.state.pending.len() {
            return Err(Error::Protocol(format!(
                "expected {} results, got {}",
                self.state.pending.len(),
                results.len()
            )));
        }
        for (k, ((p, v), want)) in results.iter().zip(&self.state.pending).enumerate() {
            if p != want {
                return Err(Error::Protocol(format!("result {k} is for a point that was not asked")));
            }
            if !v.is_finite() {
                return Err(Error::Value(format!("result {k} has non-finite objective {v}")));
            }
        }
        let initializing = self.state.obs.is_empty();
        let iteration = if initializing { 0 } else { self.state.iteration + 1 };
        for (p, v) in results {
            self.state.obs.push(Trial { point: p.clone(), raw_value: *v, iteration })?;
        }
        self.state.pending.clear();
        if !initializing {
            self.state.iteration += 1;
        }
        self.state.phase = if self.state.iteration >= self.cfg.budget { Phase::Finished } else { Phase::Suggesting };
        Ok(())
    }

    /// Best observed trial by raw value.
    pub fn result(&self) -> Result<Trial> {
        self.state.obs.best_raw().cloned()
    }
}
