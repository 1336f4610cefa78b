//! Search domains and the normalized unit hypercube.
//!
//! Every algorithm downstream of this module works on [`Point`]s in
//! `[0, 1]^d`. Radii such as the smoothing and density radii are therefore
//! expressed in normalized units and are independent of the raw bounds.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Default upper bound on the number of meshgrid candidates.
pub const DEFAULT_GRID_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log10,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub scale: Scale,
}

impl Dimension {
    pub fn linear(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self { name: name.into(), lower, upper, scale: Scale::Linear }
    }

    pub fn log10(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self { name: name.into(), lower, upper, scale: Scale::Log10 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite()) {
            return Err(Error::Domain(format!("dimension `{}` has non-finite bounds", self.name)));
        }
        if self.lower >= self.upper {
            return Err(Error::Domain(format!(
                "dimension `{}` requires lower < upper, got [{}, {}]",
                self.name, self.lower, self.upper
            )));
        }
        if self.scale == Scale::Log10 && self.lower <= 0.0 {
            return Err(Error::Domain(format!(
                "log10 dimension `{}` requires lower > 0, got {}",
                self.name, self.lower
            )));
        }
        Ok(())
    }

    fn to_unit(&self, raw: f64) -> f64 {
        match self.scale {
            Scale::Linear => (raw - self.lower) / (self.upper - self.lower),
            Scale::Log10 => {
                let (lo, hi) = (self.lower.log10(), self.upper.log10());
                (raw.log10() - lo) / (hi - lo)
            }
        }
    }

    fn unit_to_raw(&self, u: f64) -> f64 {
        let raw = match self.scale {
            Scale::Linear => self.lower + u * (self.upper - self.lower),
            Scale::Log10 => {
                let (lo, hi) = (self.lower.log10(), self.upper.log10());
                10f64.powf(lo + u * (hi - lo))
            }
        };
        raw.clamp(self.lower, self.upper)
    }
}

/// A location in the normalized unit hypercube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some((i, c)) = coords.iter().enumerate().find(|(_, c)| !(0.0..=1.0).contains(*c)) {
            return Err(Error::Domain(format!("coordinate {i} = {c} is outside [0, 1]")));
        }
        Ok(Self(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Squared Euclidean distance; both points must share a dimension.
    pub fn sq_distance(&self, other: &Point) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dimension>", into = "Vec<Dimension>")]
pub struct SearchSpace {
    dims: Vec<Dimension>,
}

impl TryFrom<Vec<Dimension>> for SearchSpace {
    type Error = Error;

    fn try_from(dims: Vec<Dimension>) -> Result<Self> {
        SearchSpace::new(dims)
    }
}

impl From<SearchSpace> for Vec<Dimension> {
    fn from(s: SearchSpace) -> Self {
        s.dims
    }
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Domain("search space needs at least one dimension".into()));
        }
        let mut seen = HashSet::new();
        for d in &dims {
            d.validate()?;
            if !seen.insert(d.name.as_str()) {
                return Err(Error::Domain(format!("duplicate dimension name `{}`", d.name)));
            }
        }
        Ok(Self { dims })
    }

    /// The unit hypercube `[0, 1]^d` with dimensions named `x0`, `x1`, ...
    pub fn unit(d: usize) -> Result<Self> {
        Self::new((0..d).map(|i| Dimension::linear(format!("x{i}"), 0.0, 1.0)).collect())
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn normalize(&self, raw: &[f64]) -> Result<Point> {
        self.check_len(raw.len())?;
        let coords = self
            .dims
            .iter()
            .zip(raw)
            .map(|(d, &v)| {
                if !(d.lower..=d.upper).contains(&v) {
                    return Err(Error::Domain(format!(
                        "value {v} for dimension `{}` is outside [{}, {}]",
                        d.name, d.lower, d.upper
                    )));
                }
                Ok(d.to_unit(v).clamp(0.0, 1.0))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Point(coords))
    }

    pub fn denormalize(&self, p: &Point) -> Result<Vec<f64>> {
        self.check_len(p.dim())?;
        Ok(self.dims.iter().zip(p.coords()).map(|(d, &u)| d.unit_to_raw(u)).collect())
    }

    /// Cartesian grid of `points_per_dim` equally spaced values per axis,
    /// endpoints included, last axis varying fastest.
    pub fn meshgrid(&self, points_per_dim: usize, cap: usize) -> Result<Vec<Point>> {
        if points_per_dim < 2 {
            return Err(Error::Domain(format!("meshgrid needs at least 2 points per dimension, got {points_per_dim}")));
        }
        let requested = (points_per_dim as u128).checked_pow(self.dim() as u32).unwrap_or(u128::MAX);
        if requested > cap as u128 {
            return Err(Error::GridBudget { requested, cap });
        }
        let d = self.dim();
        let step = 1.0 / (points_per_dim - 1) as f64;
        let axis: Vec<f64> =
            (0..points_per_dim).map(|j| if j + 1 == points_per_dim { 1.0 } else { j as f64 * step }).collect();
        let total = requested as usize;
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            out.push(Point(idx.iter().map(|&j| axis[j]).collect()));
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < points_per_dim {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(out)
    }

    /// `count` i.i.d. uniform points; the sequence is a pure function of the seed.
    pub fn sample_uniform(&self, count: usize, rng_seed: u64) -> Result<Vec<Point>> {
        if count == 0 {
            return Err(Error::Domain("sample count must be at least 1".into()));
        }
        let mut rng = stream_rng(rng_seed, Stream::Init, 0);
        Ok(self.sample_with(&mut rng, count))
    }

    pub(crate) fn sample_with<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<Point> {
        (0..count).map(|_| Point((0..self.dim()).map(|_| rng.random::<f64>()).collect())).collect()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::Domain(format!("expected {} coordinates, got {n}", self.dim())));
        }
        Ok(())
    }
}
