//! Neighbor-regularized Bayesian optimization.
//!
//! The crate is organized bottom-up:
//!
//! - [`space`]: bounded search domains, normalization to the unit hypercube,
//!   candidate grids and seeded uniform sampling.
//! - [`dataset`]: observed trials, neighbor smoothing of observations and
//!   neighbor counting.
//! - [`surrogate`]: Matérn-5/2 Gaussian process regression with NLML fitting.
//! - [`acquisition`]: EI / PI / LCB, the density reward and Pareto selection
//!   over the three density-adjusted objectives.
//! - [`schedule`]: the progress-dependent smoothing and reward radii.
//! - [`engine`]: the ask/tell optimizer and its ablation variants.
//! - [`bench`]: synthetic noisy objectives, run matrices and metrics.
//!
//! Everything below the engine works in normalized coordinates and uses the
//! lower-is-better convention.

pub mod acquisition;
pub mod bench;
pub mod dataset;
pub mod engine;
mod error;
mod linalg;
mod rng;
pub mod schedule;
pub mod space;
pub mod surrogate;

pub use acquisition::{AcqScores, DensityReward, Objectives};
pub use dataset::{ObservationSet, SmoothedSet, Trial};
pub use engine::{Engine, EngineState, OptimizerConfig, Phase, Variant};
pub use error::{Error, Result};
pub use schedule::{ScheduleConfig, ScheduleState};
pub use space::{Dimension, Point, Scale, SearchSpace};
pub use surrogate::{KernelParams, Prediction, Surrogate};
