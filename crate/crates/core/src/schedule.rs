//! Progress-dependent radii.
//!
//! The smoothing radius shrinks linearly from `sigma1_base + sigma1_span` to
//! `sigma1_base`; the density radius grows linearly from `sigma2_base` to
//! `sigma2_base + sigma2_span`. A larger density radius counts more
//! neighbors, so the reward `exp(-count)` fades as the budget is spent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub sigma1_base: f64,
    pub sigma1_span: f64,
    pub sigma2_base: f64,
    pub sigma2_span: f64,
    pub total_iterations: usize,
}

impl ScheduleConfig {
    pub fn new(
        sigma1_base: f64,
        sigma1_span: f64,
        sigma2_base: f64,
        sigma2_span: f64,
        total_iterations: usize,
    ) -> Result<Self> {
        let cfg = Self { sigma1_base, sigma1_span, sigma2_base, sigma2_span, total_iterations };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default radii for a budget of `total_iterations` suggestion rounds.
    pub fn with_budget(total_iterations: usize) -> Self {
        Self { sigma1_base: 0.05, sigma1_span: 0.10, sigma2_base: 0.05, sigma2_span: 0.15, total_iterations }
    }

    /// Both spans zeroed: the radii stay at the values used at iteration 0.
    pub fn frozen(self) -> Self {
        Self { sigma1_base: self.sigma1_base + self.sigma1_span, sigma1_span: 0.0, sigma2_span: 0.0, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let radii = [self.sigma1_base, self.sigma1_span, self.sigma2_base, self.sigma2_span];
        if radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Domain(format!("schedule radii must be finite and >= 0, got {radii:?}")));
        }
        if self.total_iterations == 0 {
            return Err(Error::Domain("schedule needs total_iterations >= 1".into()));
        }
        Ok(())
    }

    fn progress(&self, i: usize) -> Result<f64> {
        if i > self.total_iterations {
            return Err(Error::Domain(format!("iteration {i} is outside [0, {}]", self.total_iterations)));
        }
        Ok(i as f64 / self.total_iterations as f64)
    }

    pub fn sigma1_at(&self, i: usize) -> Result<f64> {
        let t = self.progress(i)?;
        Ok(self.sigma1_base + (1.0 - t) * self.sigma1_span)
    }

    pub fn sigma2_at(&self, i: usize) -> Result<f64> {
        let t = self.progress(i)?;
        Ok(self.sigma2_base + t * self.sigma2_span)
    }

    pub fn state_at(&self, i: usize) -> Result<ScheduleState> {
        Ok(ScheduleState { iteration: i, sigma1_now: self.sigma1_at(i)?, sigma2_now: self.sigma2_at(i)? })
    }
}

/// Radii in effect at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub iteration: usize,
    pub sigma1_now: f64,
    pub sigma2_now: f64,
}
