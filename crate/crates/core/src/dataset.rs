//! Observed trials and neighbor-based regularization.
//!
//! Each observation is replaced by the mean of all observations whose points
//! lie within a Euclidean ball of the smoothing radius (boundary inclusive).
//! A trial always belongs to its own neighborhood, so the mean is never empty.
//! With radius zero and distinct points the smoothed values equal the raw ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub point: Point,
    /// Objective value, lower is better.
    pub raw_value: f64,
    pub iteration: usize,
}

/// Whether `other` lies in the closed ball of `radius` around `center`.
pub fn neighbor_filter(center: &Point, other: &Point, radius: f64) -> Result<bool> {
    if center.dim() != other.dim() {
        return Err(Error::Domain(format!("dimension mismatch: {} vs {}", center.dim(), other.dim())));
    }
    check_radius(radius)?;
    Ok(within(center, other, radius))
}

#[inline]
fn within(a: &Point, b: &Point, radius: f64) -> bool {
    a.sq_distance(b).sqrt() <= radius
}

fn check_radius(radius: f64) -> Result<()> {
    if radius.is_nan() || radius < 0.0 {
        return Err(Error::Domain(format!("radius must be >= 0, got {radius}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    trials: Vec<Trial>,
}

impl ObservationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, trial: Trial) -> Result<()> {
        if !trial.raw_value.is_finite() {
            return Err(Error::Value(format!("objective value {} is not finite", trial.raw_value)));
        }
        if let Some(last) = self.trials.last() {
            if trial.iteration < last.iteration {
                return Err(Error::State(format!(
                    "trial iteration {} precedes stored iteration {}",
                    trial.iteration, last.iteration
                )));
            }
            if trial.point.dim() != last.point.dim() {
                return Err(Error::Domain("trial dimension differs from stored trials".into()));
            }
        }
        self.trials.push(trial);
        Ok(())
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn points(&self) -> Vec<Point> {
        self.trials.iter().map(|t| t.point.clone()).collect()
    }

    pub fn raw_values(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.raw_value).collect()
    }

    /// Neighbor-averaged observations, in storage order.
    pub fn smooth(&self, radius: f64) -> Result<SmoothedSet> {
        if self.is_empty() {
            return Err(Error::State("cannot smooth an empty observation set".into()));
        }
        check_radius(radius)?;
        let pairs = self
            .trials
            .iter()
            .map(|center| {
                let (sum, count) = self
                    .trials
                    .iter()
                    .filter(|t| within(&center.point, &t.point, radius))
                    .fold((0.0, 0usize), |(s, n), t| (s + t.raw_value, n + 1));
                (center.point.clone(), sum / count as f64)
            })
            .collect();
        Ok(SmoothedSet { pairs })
    }

    /// Number of stored trials inside the closed ball around `query`.
    pub fn neighbor_count(&self, query: &Point, radius: f64) -> Result<usize> {
        check_radius(radius)?;
        Ok(self.trials.iter().filter(|t| within(query, &t.point, radius)).count())
    }

    /// Lowest raw value; ties go to the earliest stored trial.
    pub fn best_raw(&self) -> Result<&Trial> {
        self.trials
            .iter()
            .reduce(|best, t| if t.raw_value < best.raw_value { t } else { best })
            .ok_or_else(|| Error::State("no trials observed".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedSet {
    pairs: Vec<(Point, f64)>,
}

impl SmoothedSet {
    pub fn pairs(&self) -> &[(Point, f64)] {
        &self.pairs
    }

    pub fn values(&self) -> Vec<f64> {
        self.pairs.iter().map(|(_, v)| *v).collect()
    }

    pub fn points(&self) -> Vec<Point> {
        self.pairs.iter().map(|(p, _)| p.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}
