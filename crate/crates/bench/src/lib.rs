//! Seeded fixtures shared by the benchmarks.

use nrbo_core::acquisition::Objectives;
use nrbo_core::{ObservationSet, Point, Trial};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn points(n: usize, d: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Point::new((0..d).map(|_| rng.random::<f64>()).collect()).expect("unit coordinates")).collect()
}

/// Observations of a smooth 2-D bowl with uniform noise.
pub fn observations(n: usize, seed: u64) -> ObservationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut obs = ObservationSet::new();
    for p in points(n, 2, seed) {
        let c = p.coords();
        let y = (c[0] - 0.3).powi(2) + (c[1] - 0.7).powi(2) + 0.1 * rng.random::<f64>();
        obs.push(Trial { point: p, raw_value: y, iteration: 0 }).expect("finite value");
    }
    obs
}

pub fn objectives(n: usize, seed: u64) -> Objectives {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut col = || (0..n).map(|_| rng.random::<f64>()).collect::<Vec<_>>();
    Objectives::new(col(), col(), col()).expect("equal lengths")
}
