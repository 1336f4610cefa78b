//! Density-adjusted acquisition ensemble.
//!
//! Three myopic scores are computed per candidate (EI, PI and a lower
//! confidence bound), each shifted by the density reward times the population
//! standard deviation of that score over the candidate set:
//!
//! ```text
//! minimize ( -EI - g*S_ei,  -PI - g*S_pi,  LCB - g*S_lcb ),   g = exp(-neighbors(x, sigma2))
//! ```
//!
//! The next point is drawn uniformly from the exact Pareto front of these
//! three objectives over the candidate set.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::ObservationSet;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::space::Point;
use crate::surrogate::{Prediction, Surrogate};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Closed-form expected improvement below `incumbent`.
pub fn expected_improvement(pred: &Prediction, incumbent: f64) -> f64 {
    let gap = incumbent - pred.mean;
    let std = pred.std();
    if std == 0.0 {
        return gap.max(0.0);
    }
    let z = gap / std;
    (gap * norm_cdf(z) + std * norm_pdf(z)).max(0.0)
}

pub fn probability_improvement(pred: &Prediction, incumbent: f64) -> f64 {
    let std = pred.std();
    if std == 0.0 {
        return if pred.mean < incumbent { 1.0 } else { 0.0 };
    }
    norm_cdf((incumbent - pred.mean) / std)
}

/// `mean - kappa * std`; lower is more promising.
pub fn lower_confidence_bound(pred: &Prediction, kappa: f64) -> f64 {
    pred.mean - kappa * pred.std()
}

fn population_std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Unadjusted scores over a candidate set with their normalizers.
#[derive(Debug, Clone, PartialEq)]
pub struct AcqScores {
    pub ei: Vec<f64>,
    pub pi: Vec<f64>,
    pub ucb: Vec<f64>,
    pub s_ei: f64,
    pub s_pi: f64,
    pub s_ucb: f64,
}

impl AcqScores {
    pub fn from_predictions(preds: &[Prediction], incumbent: f64, kappa: f64) -> Self {
        let ei: Vec<f64> = preds.iter().map(|p| expected_improvement(p, incumbent)).collect();
        let pi: Vec<f64> = preds.iter().map(|p| probability_improvement(p, incumbent)).collect();
        let ucb: Vec<f64> = preds.iter().map(|p| lower_confidence_bound(p, kappa)).collect();
        Self { s_ei: population_std(&ei), s_pi: population_std(&pi), s_ucb: population_std(&ucb), ei, pi, ucb }
    }

    pub fn len(&self) -> usize {
        self.ei.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ei.is_empty()
    }
}

/// Per-candidate reward `exp(-neighbor_count)`, in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityReward {
    pub g: Vec<f64>,
}

impl DensityReward {
    /// Reward disabled: every entry 1, which shifts each objective uniformly.
    pub fn uniform(n: usize) -> Self {
        Self { g: vec![1.0; n] }
    }
}

pub fn density_rewards(obs: &ObservationSet, candidates: &[Point], sigma2: f64) -> Result<DensityReward> {
    let g = candidates
        .iter()
        .map(|c| obs.neighbor_count(c, sigma2).map(|n| (-(n as f64)).exp()))
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityReward { g })
}

/// The three minimized objectives, one entry per candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Objectives {
    pub ei: Vec<f64>,
    pub pi: Vec<f64>,
    pub ucb: Vec<f64>,
}

impl Objectives {
    pub fn new(ei: Vec<f64>, pi: Vec<f64>, ucb: Vec<f64>) -> Result<Self> {
        if ei.len() != pi.len() || ei.len() != ucb.len() {
            return Err(Error::Domain("objective vectors differ in length".into()));
        }
        Ok(Self { ei, pi, ucb })
    }

    pub fn len(&self) -> usize {
        self.ei.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ei.is_empty()
    }

    pub fn row(&self, i: usize) -> [f64; 3] {
        [self.ei[i], self.pi[i], self.ucb[i]]
    }
}

/// Applies the density reward to precomputed scores.
pub fn adjust(scores: &AcqScores, reward: &DensityReward) -> Result<Objectives> {
    if reward.g.len() != scores.len() {
        return Err(Error::Domain(format!("{} rewards for {} candidates", reward.g.len(), scores.len())));
    }
    let ei = scores.ei.iter().zip(&reward.g).map(|(e, g)| -e - g * scores.s_ei).collect();
    let pi = scores.pi.iter().zip(&reward.g).map(|(p, g)| -p - g * scores.s_pi).collect();
    let ucb = scores.ucb.iter().zip(&reward.g).map(|(u, g)| u - g * scores.s_ucb).collect();
    Ok(Objectives { ei, pi, ucb })
}

/// Scores `candidates` under the fitted surrogate with the density reward at `sigma2`.
pub fn score_candidates(
    surrogate: &Surrogate,
    obs: &ObservationSet,
    candidates: &[Point],
    sigma2: f64,
    kappa: f64,
    incumbent: f64,
) -> Result<Objectives> {
    if candidates.is_empty() {
        return Err(Error::Domain("no candidates to score".into()));
    }
    let preds = surrogate.predict_batch(candidates);
    let scores = AcqScores::from_predictions(&preds, incumbent, kappa);
    adjust(&scores, &density_rewards(obs, candidates, sigma2)?)
}

fn dominates(a: &[f64; 3], b: &[f64; 3]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Indices of non-dominated rows among `subset`, ascending.
fn front_of(objs: &Objectives, subset: &[usize]) -> Vec<usize> {
    // Lexicographic order guarantees a dominator is visited before anything it
    // dominates, so each row only needs checking against the front so far.
    let mut order = subset.to_vec();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (objs.row(a), objs.row(b));
        ra.iter()
            .zip(&rb)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        let ri = objs.row(i);
        if !front.iter().any(|&f| dominates(&objs.row(f), &ri)) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}

/// Pareto-optimal candidate indices under three-objective minimization.
pub fn pareto_front(objs: &Objectives) -> Vec<usize> {
    let all: Vec<usize> = (0..objs.len()).collect();
    front_of(objs, &all)
}

/// First index that is no worse than every other candidate on all objectives.
fn ideal_index(objs: &Objectives) -> Option<usize> {
    let mins = [
        objs.ei.iter().cloned().fold(f64::INFINITY, f64::min),
        objs.pi.iter().cloned().fold(f64::INFINITY, f64::min),
        objs.ucb.iter().cloned().fold(f64::INFINITY, f64::min),
    ];
    (0..objs.len()).find(|&i| objs.row(i) == mins)
}

/// Draws `count` distinct candidates: uniformly from the Pareto front, then
/// from successive non-dominated layers once a front is exhausted.
pub fn select_batch<R: Rng>(objs: &Objectives, count: usize, rng: &mut R) -> Result<Vec<usize>> {
    if objs.is_empty() {
        return Err(Error::Domain("no candidates to select from".into()));
    }
    if count > objs.len() {
        return Err(Error::Domain(format!("batch of {count} from {} candidates", objs.len())));
    }
    let mut chosen = Vec::with_capacity(count);
    if let Some(i) = ideal_index(objs) {
        chosen.push(i);
    }
    let mut remaining: Vec<usize> = (0..objs.len()).filter(|i| !chosen.contains(i)).collect();
    while chosen.len() < count {
        let mut layer = front_of(objs, &remaining);
        layer.shuffle(rng);
        let take = (count - chosen.len()).min(layer.len());
        chosen.extend_from_slice(&layer[..take]);
        remaining.retain(|i| !layer[..take].contains(i));
    }
    Ok(chosen)
}

pub fn select_next(objs: &Objectives, rng_seed: u64) -> Result<usize> {
    let mut rng = stream_rng(rng_seed, Stream::Select, 0);
    Ok(select_batch(objs, 1, &mut rng)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Trial;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn pred(mean: f64, std: f64) -> Prediction {
        Prediction { mean, variance: std * std }
    }

    #[test]
    fn ei_examples() {
        let e = expected_improvement(&pred(1.0, 0.7), 1.0);
        assert!((e - 0.7 * 0.398_942_3).abs() < 1e-7);
        assert_eq!(expected_improvement(&pred(2.0, 0.0), 1.0), 0.0);
        assert_eq!(expected_improvement(&pred(1.0, 0.0), 1.0), 0.0);
        assert_eq!(expected_improvement(&pred(0.0, 0.0), 1.0), 1.0);
    }

    #[test]
    fn pi_examples() {
        assert_eq!(probability_improvement(&pred(1.0, 0.3), 1.0), 0.5);
        let p = probability_improvement(&pred(1.0 - 3.0 * 0.3, 0.3), 1.0);
        assert!((p - 0.998_650_1).abs() < 1e-6);
        assert_eq!(probability_improvement(&pred(1.5, 0.0), 1.0), 0.0);
        assert_eq!(probability_improvement(&pred(0.5, 0.0), 1.0), 1.0);
    }

    #[test]
    fn lcb_examples() {
        assert_eq!(lower_confidence_bound(&pred(0.3, 0.0), 2.0), 0.3);
        assert_eq!(lower_confidence_bound(&pred(1.0, 0.5), 2.0), 0.0);
    }

    #[test]
    fn ei_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = pred(0.4, 0.8);
        let n = 1_000_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                (0.4 - (p.mean
                    + p.std() * {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z
                    }))
                .max(0.0)
            })
            .collect();
        let mc = samples.iter().sum::<f64>() / n as f64;
        assert!((expected_improvement(&p, 0.4) - mc).abs() / mc < 1e-2);
    }

    #[test]
    fn density_reward_examples() {
        let cands = vec![Point::new(vec![0.5, 0.5]).unwrap(), Point::new(vec![0.0, 0.0]).unwrap()];
        let empty = ObservationSet::new();
        assert_eq!(density_rewards(&empty, &cands, 0.3).unwrap().g, vec![1.0, 1.0]);

        let mut obs = ObservationSet::new();
        obs.push(Trial { point: Point::new(vec![0.55, 0.5]).unwrap(), raw_value: 1.0, iteration: 0 }).unwrap();
        let g = density_rewards(&obs, &cands, 0.1).unwrap().g;
        assert!((g[0] - 0.367_879_441).abs() < 1e-9);
        assert_eq!(g[1], 1.0);
    }

    #[test]
    fn manual_three_candidate_scores() {
        let preds = [pred(0.2, 0.5), pred(-0.1, 0.1), pred(0.5, 1.2)];
        let g = DensityReward { g: vec![1.0, (-1f64).exp(), (-3f64).exp()] };
        let (inc, kappa) = (0.0, 2.0);
        let objs = adjust(&AcqScores::from_predictions(&preds, inc, kappa), &g).unwrap();

        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let cdf = |z: f64| 0.5 * libm::erfc(-z / 2f64.sqrt());
        let mut ei = [0.0; 3];
        let mut pi = [0.0; 3];
        let mut lcb = [0.0; 3];
        for (k, p) in preds.iter().enumerate() {
            let s = p.variance.sqrt();
            let z = (inc - p.mean) / s;
            ei[k] = (inc - p.mean) * cdf(z) + s * phi(z);
            pi[k] = cdf(z);
            lcb[k] = p.mean - kappa * s;
        }
        let sd = |v: &[f64; 3]| {
            let m = (v[0] + v[1] + v[2]) / 3.0;
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 3.0).sqrt()
        };
        let (se, sp, su) = (sd(&ei), sd(&pi), sd(&lcb));
        for k in 0..3 {
            assert!((objs.ei[k] - (-ei[k] - g.g[k] * se)).abs() < 1e-10);
            assert!((objs.pi[k] - (-pi[k] - g.g[k] * sp)).abs() < 1e-10);
            assert!((objs.ucb[k] - (lcb[k] - g.g[k] * su)).abs() < 1e-10);
        }
    }

    #[test]
    fn uniform_reward_preserves_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let preds: Vec<Prediction> =
            (0..40).map(|_| pred(rng.random_range(-1.0..1.0), rng.random_range(0.01..1.0))).collect();
        let scores = AcqScores::from_predictions(&preds, -0.2, 2.0);
        let objs = adjust(&scores, &DensityReward::uniform(40)).unwrap();
        let argmin = |v: &[f64]| (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        let neg_ei: Vec<f64> = scores.ei.iter().map(|x| -x).collect();
        let neg_pi: Vec<f64> = scores.pi.iter().map(|x| -x).collect();
        assert_eq!(argmin(&objs.ei), argmin(&neg_ei));
        assert_eq!(argmin(&objs.pi), argmin(&neg_pi));
        assert_eq!(argmin(&objs.ucb), argmin(&scores.ucb));
    }

    #[test]
    fn selection_examples() {
        let single = Objectives::new(vec![1.0], vec![1.0], vec![1.0]).unwrap();
        assert_eq!(select_next(&single, 3).unwrap(), 0);

        let dominated = Objectives::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.5], vec![-1.0, 0.0, 3.0]).unwrap();
        for seed in 0..20 {
            assert_eq!(select_next(&dominated, seed).unwrap(), 0);
        }

        let tradeoff = Objectives::new(vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(pareto_front(&tradeoff), vec![0, 1]);
        let picks: Vec<usize> = (0..30).map(|s| select_next(&tradeoff, s).unwrap()).collect();
        assert!(picks.contains(&0) && picks.contains(&1));
        assert_eq!(select_next(&tradeoff, 17).unwrap(), select_next(&tradeoff, 17).unwrap());
    }

    #[test]
    fn batch_fills_from_next_layer() {
        // Front {0}, second layer {1, 2}, third {3}.
        let objs =
            Objectives::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 2.0, 1.0, 3.0], vec![0.0, 1.0, 1.0, 3.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = select_batch(&objs, 3, &mut rng).unwrap();
        assert_eq!(batch[0], 0);
        let mut rest = batch[1..].to_vec();
        rest.sort();
        assert_eq!(rest, vec![1, 2]);
        assert!(select_batch(&objs, 5, &mut rng).is_err());
    }

    fn brute_front(objs: &Objectives) -> Vec<usize> {
        (0..objs.len()).filter(|&i| !(0..objs.len()).any(|j| j != i && dominates(&objs.row(j), &objs.row(i)))).collect()
    }

    #[test]
    fn front_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..50 {
            let v = |rng: &mut ChaCha8Rng| (0..40).map(|_| rng.random_range(0..8) as f64).collect::<Vec<_>>();
            let objs = Objectives::new(v(&mut rng), v(&mut rng), v(&mut rng)).unwrap();
            assert_eq!(pareto_front(&objs), brute_front(&objs));
        }
    }

    proptest! {
        #[test]
        fn scores_are_well_formed(mean in -3.0f64..3.0, std in 0.0f64..2.0, inc in -3.0f64..3.0, dstd in 0.0f64..1.0) {
            let p = pred(mean, std);
            let ei = expected_improvement(&p, inc);
            let pi = probability_improvement(&p, inc);
            prop_assert!(ei >= 0.0);
            prop_assert!((0.0..=1.0).contains(&pi));
            prop_assert!(expected_improvement(&pred(mean, std + dstd), inc) >= ei - 1e-12);
            prop_assert!(lower_confidence_bound(&p, 2.0 + dstd) <= lower_confidence_bound(&p, 2.0));
        }

        #[test]
        fn more_neighbors_worsen_objectives(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let preds: Vec<Prediction> =
                (0..10).map(|_| pred(rng.random_range(-1.0..1.0), rng.random_range(0.05..1.0))).collect();
            let scores = AcqScores::from_predictions(&preds, 0.0, 2.0);
            let counts: Vec<usize> = (0..10).map(|_| rng.random_range(0..4)).collect();
            let reward = |c: &[usize]| DensityReward { g: c.iter().map(|&n| (-(n as f64)).exp()).collect() };
            let before = adjust(&scores, &reward(&counts)).unwrap();
            let k = rng.random_range(0..10);
            let mut more = counts.clone();
            more[k] += 1;
            let after = adjust(&scores, &reward(&more)).unwrap();
            prop_assert!(after.ei[k] > before.ei[k]);
            prop_assert!(after.pi[k] > before.pi[k]);
            prop_assert!(after.ucb[k] > before.ucb[k]);
        }

        #[test]
        fn selection_is_pareto_optimal(seed in 0u64..1000, n in 1usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.random::<f64>()).collect::<Vec<_>>();
            let objs = Objectives::new(v(&mut rng), v(&mut rng), v(&mut rng)).unwrap();
            let i = select_next(&objs, seed).unwrap();
            prop_assert!(!(0..n).any(|j| dominates(&objs.row(j), &objs.row(i))));
        }
    }
}
