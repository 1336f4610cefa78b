//! Gaussian-process surrogate with a Matérn-5/2 ARD kernel.
//!
//! Targets are standardized before fitting. Kernel hyperparameters are fitted
//! by minimizing the negative log marginal likelihood (NLML) over
//! log-parameters with a bounded quasi-Newton search and Armijo backtracking,
//! so the NLML never increases between accepted iterates.
//!
//! The noise variance is parameterized relative to the signal variance and
//! confined to [[`NOISE_FLOOR`], [`NOISE_CEILING`]] times it: the GP stays
//! close to interpolating and denoising is left to neighbor smoothing of the
//! targets.

use std::f64::consts::LN_10;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cho_inverse, cho_solve, cholesky_in_place, solve_lower};
use crate::rng::{stream_rng, Stream};
use crate::space::Point;

/// Minimum noise variance as a fraction of the signal variance.
pub const NOISE_FLOOR: f64 = 1e-6;
/// Maximum noise variance as a fraction of the signal variance.
pub const NOISE_CEILING: f64 = 1e-2;

const SQRT5: f64 = 2.236_067_977_499_79;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Bounds on the log-parameters, in the order
/// `[ln signal_variance, ln lengthscale_1..d, ln noise_ratio]`.
const LOG_SIGNAL_BOUNDS: (f64, f64) = (-3.0 * LN_10, 3.0 * LN_10);
const LOG_LENGTH_BOUNDS: (f64, f64) = (-2.0 * LN_10, LN_10);
const LOG_NOISE_RATIO_BOUNDS: (f64, f64) = (-6.0 * LN_10, -2.0 * LN_10);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelParams {
    /// Unit signal, shared lengthscale, noise at the floor.
    pub fn isotropic(d: usize, lengthscale: f64) -> Self {
        Self { signal_variance: 1.0, lengthscales: vec![lengthscale; d], noise_variance: NOISE_FLOOR }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.lengthscales.len() != d {
            return Err(Error::Domain(format!("{} lengthscales for a {d}-dimensional input", self.lengthscales.len())));
        }
        if self.signal_variance.is_nan()
            || self.signal_variance <= 0.0
            || self.lengthscales.iter().any(|l| l.is_nan() || *l <= 0.0)
        {
            return Err(Error::Domain("kernel variances and lengthscales must be positive".into()));
        }
        if self.noise_variance < NOISE_FLOOR * self.signal_variance * (1.0 - 1e-12) {
            return Err(Error::Domain(format!(
                "noise variance {} is below the floor {}",
                self.noise_variance,
                NOISE_FLOOR * self.signal_variance
            )));
        }
        Ok(())
    }

    /// Log-parameter vector `[ln s2, ln l_1..d, ln(noise / s2)]`.
    pub fn to_log(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.lengthscales.len() + 2);
        v.push(self.signal_variance.ln());
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push((self.noise_variance / self.signal_variance).ln());
        v
    }

    pub fn from_log(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        let s2 = theta[0].exp();
        Self {
            signal_variance: s2,
            lengthscales: theta[1..=d].iter().map(|t| t.exp()).collect(),
            noise_variance: s2 * theta[d + 1].exp(),
        }
    }
}

fn log_bounds(d: usize) -> Vec<(f64, f64)> {
    let mut b = vec![LOG_SIGNAL_BOUNDS];
    b.extend(std::iter::repeat_n(LOG_LENGTH_BOUNDS, d));
    b.push(LOG_NOISE_RATIO_BOUNDS);
    b
}

#[inline]
fn matern52(r: f64) -> f64 {
    let s = SQRT5 * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

#[inline]
fn scaled_sq_dist(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| {
            let t = (x - y) / l;
            t * t
        })
        .sum()
}

/// Matérn-5/2 ARD covariance between two points.
pub fn kernel(a: &Point, b: &Point, params: &KernelParams) -> Result<f64> {
    if a.dim() != b.dim() || a.dim() != params.lengthscales.len() {
        return Err(Error::Domain(format!(
            "dimension mismatch: {} vs {} (kernel has {})",
            a.dim(),
            b.dim(),
            params.lengthscales.len()
        )));
    }
    let r = scaled_sq_dist(a.coords(), b.coords(), &params.lengthscales).sqrt();
    Ok(params.signal_variance * matern52(r))
}

/// `K + noise I` as a dense row-major matrix.
fn gram(points: &[Point], params: &KernelParams, extra_jitter: f64) -> Vec<f64> {
    let n = points.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = params.signal_variance + params.noise_variance + extra_jitter;
        for j in 0..i {
            let r = scaled_sq_dist(points[i].coords(), points[j].coords(), &params.lengthscales).sqrt();
            let v = params.signal_variance * matern52(r);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// NLML and its gradient with respect to [`KernelParams::to_log`] coordinates.
///
/// `targets` are used as given (no standardization).
pub fn nlml_with_grad(points: &[Point], targets: &[f64], params: &KernelParams) -> Result<(f64, Vec<f64>)> {
    let n = points.len();
    if n == 0 || targets.len() != n {
        return Err(Error::Domain("points and targets must be non-empty and equal length".into()));
    }
    let d = points[0].dim();
    params.validate(d)?;
    let mut l = gram(points, params, 0.0);
    if !cholesky_in_place(&mut l, n) {
        return Err(Error::Numerical("kernel matrix is not positive definite".into()));
    }
    let mut alpha = targets.to_vec();
    cho_solve(&l, n, &mut alpha);
    let data_fit: f64 = targets.iter().zip(&alpha).map(|(y, a)| y * a).sum();
    let log_det: f64 = (0..n).map(|i| l[i * n + i].ln()).sum();
    let value = 0.5 * data_fit + log_det + 0.5 * n as f64 * LN_2PI;

    // W = K^{-1} - alpha alpha^T; dNLML/dtheta = tr(W dK/dtheta) / 2.
    let mut w = cho_inverse(&l, n);
    for i in 0..n {
        for j in 0..n {
            w[i * n + j] -= alpha[i] * alpha[j];
        }
    }
    let s2 = params.signal_variance;
    let mut grad = vec![0.0; d + 2];
    grad[0] = 0.5 * (n as f64 - data_fit);
    let trace_w: f64 = (0..n).map(|i| w[i * n + i]).sum();
    grad[d + 1] = 0.5 * params.noise_variance * trace_w;
    for i in 0..n {
        let xi = points[i].coords();
        for j in 0..i {
            let xj = points[j].coords();
            let r = scaled_sq_dist(xi, xj, &params.lengthscales).sqrt();
            let s = SQRT5 * r;
            let common = s2 * (5.0 / 3.0) * (1.0 + s) * (-s).exp();
            // Off-diagonal pairs appear twice in the trace.
            let wij = w[i * n + j];
            for k in 0..d {
                let t = (xi[k] - xj[k]) / params.lengthscales[k];
                grad[1 + k] += wij * common * t * t;
            }
        }
    }
    Ok((value, grad))
}

/// Result of one bounded NLML minimization.
#[derive(Debug, Clone)]
struct Minimum {
    theta: Vec<f64>,
    value: f64,
    trace: Vec<f64>,
}

fn objective(points: &[Point], targets: &[f64], theta: &[f64]) -> Option<(f64, Vec<f64>)> {
    let params = KernelParams::from_log(theta);
    nlml_with_grad(points, targets, &params).ok().filter(|(v, g)| v.is_finite() && g.iter().all(|x| x.is_finite()))
}

fn project(theta: &mut [f64], bounds: &[(f64, f64)]) {
    for (t, &(lo, hi)) in theta.iter_mut().zip(bounds) {
        *t = t.clamp(lo, hi);
    }
}

/// Gradient with components that push against an active bound removed.
fn projected_gradient(theta: &[f64], grad: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    theta
        .iter()
        .zip(grad)
        .zip(bounds)
        .map(|((&t, &g), &(lo, hi))| if (t <= lo && g > 0.0) || (t >= hi && g < 0.0) { 0.0 } else { g })
        .collect()
}

fn minimize(points: &[Point], targets: &[f64], start: Vec<f64>, max_iters: usize) -> Option<Minimum> {
    let bounds = log_bounds(points[0].dim());
    let m = start.len();
    let mut theta = start;
    project(&mut theta, &bounds);
    let (mut f, mut g) = objective(points, targets, &theta)?;
    let mut trace = vec![f];
    let mut h = identity(m);
    let mut h_is_identity = true;

    for _ in 0..max_iters {
        let pg = projected_gradient(&theta, &g, &bounds);
        if pg.iter().map(|x| x.abs()).fold(0.0, f64::max) < 1e-7 {
            break;
        }
        let mut dir = descent_direction(&h, &g, &theta, &bounds);
        if dot(&dir, &pg) >= 0.0 {
            h = identity(m);
            h_is_identity = true;
            dir = pg.iter().map(|x| -x).collect();
        }
        // Cap the step so the first trial stays within a sane log-scale move.
        let norm = dot(&dir, &dir).sqrt();
        if norm > 3.0 {
            dir.iter_mut().for_each(|x| *x *= 3.0 / norm);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, p)| t + step * p).collect();
            project(&mut cand, &bounds);
            let moved: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &moved);
            if decrease < 0.0 {
                if let Some((fc, gc)) = objective(points, targets, &cand) {
                    if fc <= f + 1e-4 * decrease {
                        accepted = Some((cand, fc, gc, moved));
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc, s)) = accepted else {
            if h_is_identity {
                break;
            }
            h = identity(m);
            h_is_identity = true;
            continue;
        };
        let y: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 {
            bfgs_update(&mut h, &s, &y, sy);
            h_is_identity = false;
        }
        let improvement = f - fc;
        theta = cand;
        f = fc;
        g = gc;
        trace.push(f);
        if improvement <= 1e-12 * (1.0 + f.abs()) {
            break;
        }
    }
    Some(Minimum { theta, value: f, trace })
}

fn identity(m: usize) -> Vec<f64> {
    let mut h = vec![0.0; m * m];
    (0..m).for_each(|i| h[i * m + i] = 1.0);
    h
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn descent_direction(h: &[f64], g: &[f64], theta: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    let m = g.len();
    // Coordinates pinned at a bound by the gradient are held fixed.
    let free: Vec<bool> = theta
        .iter()
        .zip(g)
        .zip(bounds)
        .map(|((&t, &gi), &(lo, hi))| !((t <= lo && gi > 0.0) || (t >= hi && gi < 0.0)))
        .collect();
    (0..m)
        .map(|i| {
            if !free[i] {
                return 0.0;
            }
            -(0..m).filter(|&j| free[j]).map(|j| h[i * m + j] * g[j]).sum::<f64>()
        })
        .collect()
}

/// Inverse-Hessian BFGS update.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let m = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..m).map(|i| (0..m).map(|j| h[i * m + j] * y[j]).sum()).collect();
    let yhy = dot(y, &hy);
    for i in 0..m {
        for j in 0..m {
            h[i * m + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
        }
    }
}

/// Standardization constants for a target vector. Constant targets map to zeros.
fn standardize(targets: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = targets.len() as f64;
    if targets.iter().all(|&t| t == targets[0]) {
        return (targets[0], 1.0, vec![0.0; targets.len()]);
    }
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    let std = if var.sqrt() > 0.0 { var.sqrt() } else { 1.0 };
    let z = targets.iter().map(|t| (t - mean) / std).collect();
    (mean, std, z)
}

/// Hyperparameter search settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { restarts: 4, max_iters: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// A fitted GP posterior. Immutable once built.
#[derive(Debug, Clone)]
pub struct Surrogate {
    params: KernelParams,
    points: Vec<Point>,
    targets: Vec<f64>,
    target_mean: f64,
    target_std: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    nlml: f64,
    nlml_trace: Vec<f64>,
}

impl Surrogate {
    /// Fits kernel hyperparameters by multi-start NLML minimization.
    pub fn fit(points: &[Point], targets: &[f64], restarts: usize, rng_seed: u64) -> Result<Self> {
        Self::fit_with(points, targets, FitOptions { restarts, ..FitOptions::default() }, rng_seed)
    }

    pub fn fit_with(points: &[Point], targets: &[f64], opts: FitOptions, rng_seed: u64) -> Result<Self> {
        check_training(points, targets)?;
        if opts.restarts == 0 {
            return Err(Error::Domain("at least one restart is required".into()));
        }
        let d = points[0].dim();
        let (_, _, z) = standardize(targets);
        let bounds = log_bounds(d);
        let mut rng = stream_rng(rng_seed, Stream::GpFit, 0);
        let starts: Vec<Vec<f64>> = (0..opts.restarts)
            .map(|r| {
                if r == 0 {
                    KernelParams { noise_variance: 1e-3, ..KernelParams::isotropic(d, 0.3) }.to_log()
                } else {
                    bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect()
                }
            })
            .collect();
        let minima: Vec<Option<Minimum>> =
            starts.into_par_iter().map(|s| minimize(points, &z, s, opts.max_iters)).collect();
        // Lowest NLML wins; ties go to the earliest restart.
        let best =
            minima.into_iter().flatten().reduce(|a, b| if b.value < a.value { b } else { a }).ok_or_else(|| {
                Error::Numerical("NLML could not be evaluated at any restart; kernel matrix is singular".into())
            })?;
        let params = KernelParams::from_log(&best.theta);
        let mut s = Self::with_params(points, targets, params)?;
        s.nlml_trace = best.trace;
        Ok(s)
    }

    /// Builds the posterior for fixed hyperparameters, escalating diagonal
    /// jitter if the factorization fails.
    pub fn with_params(points: &[Point], targets: &[f64], params: KernelParams) -> Result<Self> {
        check_training(points, targets)?;
        let n = points.len();
        params.validate(points[0].dim())?;
        let (target_mean, target_std, z) = standardize(targets);
        let base = params.signal_variance + params.noise_variance;
        let mut jitter = 0.0;
        let chol = loop {
            let mut k = gram(points, &params, jitter);
            if cholesky_in_place(&mut k, n) {
                break k;
            }
            jitter = if jitter == 0.0 { 1e-10 * base } else { jitter * 10.0 };
            if jitter > 1e-2 * base {
                return Err(Error::Numerical(format!(
                    "Cholesky failed for {n} points even with jitter {:.1e} (signal {:.3e}, noise {:.3e})",
                    jitter / 10.0,
                    params.signal_variance,
                    params.noise_variance
                )));
            }
        };
        let mut alpha = z.clone();
        cho_solve(&chol, n, &mut alpha);
        let data_fit: f64 = z.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let log_det: f64 = (0..n).map(|i| chol[i * n + i].ln()).sum();
        let nlml = 0.5 * data_fit + log_det + 0.5 * n as f64 * LN_2PI;
        Ok(Self {
            params,
            points: points.to_vec(),
            targets: z,
            target_mean,
            target_std,
            chol,
            alpha,
            nlml,
            nlml_trace: vec![nlml],
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn training_points(&self) -> &[Point] {
        &self.points
    }

    /// Standardized training targets.
    pub fn training_targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn target_std(&self) -> f64 {
        self.target_std
    }

    /// Lower-triangular factor of `K + noise I`, row-major.
    pub fn chol_factor(&self) -> &[f64] {
        &self.chol
    }

    /// NLML of the standardized targets at the fitted parameters.
    pub fn nlml(&self) -> f64 {
        self.nlml
    }

    /// NLML at every accepted optimizer iterate of the winning restart.
    pub fn nlml_trace(&self) -> &[f64] {
        &self.nlml_trace
    }

    /// Prior variance in raw units.
    pub fn prior_variance(&self) -> f64 {
        self.params.signal_variance * self.target_std * self.target_std
    }

    pub fn predict(&self, query: &Point) -> Prediction {
        let n = self.points.len();
        let mut k: Vec<f64> = self
            .points
            .iter()
            .map(|p| {
                let r = scaled_sq_dist(p.coords(), query.coords(), &self.params.lengthscales).sqrt();
                self.params.signal_variance * matern52(r)
            })
            .collect();
        let mean_z = dot(&k, &self.alpha);
        solve_lower(&self.chol, n, &mut k);
        let var_z = (self.params.signal_variance - dot(&k, &k)).max(0.0);
        Prediction {
            mean: self.target_mean + self.target_std * mean_z,
            variance: var_z * self.target_std * self.target_std,
        }
    }

    pub fn predict_batch(&self, queries: &[Point]) -> Vec<Prediction> {
        if queries.len() < 256 {
            queries.iter().map(|q| self.predict(q)).collect()
        } else {
            queries.par_iter().map(|q| self.predict(q)).collect()
        }
    }
}

fn check_training(points: &[Point], targets: &[f64]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::Domain(format!("need at least 2 training points, got {}", points.len())));
    }
    if targets.len() != points.len() {
        return Err(Error::Domain(format!("{} targets for {} points", targets.len(), points.len())));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Value("training targets must be finite".into()));
    }
    let d = points[0].dim();
    if points.iter().any(|p| p.dim() != d) {
        return Err(Error::Domain("training points have mixed dimensions".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Point> {
        (0..n).map(|_| pt(&(0..d).map(|_| rng.random::<f64>()).collect::<Vec<_>>())).collect()
    }

    #[test]
    fn kernel_values() {
        let p = KernelParams { signal_variance: 2.5, ..KernelParams::isotropic(2, 0.4) };
        let a = pt(&[0.1, 0.9]);
        assert_eq!(kernel(&a, &a, &p).unwrap(), 2.5);

        // Scaled distance exactly 1: closed form (1 + sqrt5 + 5/3) e^{-sqrt5}.
        let q = KernelParams::isotropic(1, 0.5);
        let v = kernel(&pt(&[0.0]), &pt(&[0.5]), &q).unwrap();
        let expected = (1.0 + 5f64.sqrt() + 5.0 / 3.0) * (-(5f64.sqrt())).exp();
        assert!((v - expected).abs() < 1e-14);
        assert!((v - 0.52399).abs() < 1e-5);

        assert!(kernel(&a, &pt(&[0.1]), &p).is_err());
    }

    #[test]
    fn kernel_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = KernelParams { signal_variance: 1.3, lengthscales: vec![0.2, 0.7, 1.5], noise_variance: 1e-3 };
        for _ in 0..50 {
            let pts = random_points(&mut rng, 2, 3);
            assert_eq!(kernel(&pts[0], &pts[1], &p).unwrap(), kernel(&pts[1], &pts[0], &p).unwrap());
        }
    }

    #[test]
    fn nlml_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..5 {
            let pts = random_points(&mut rng, 12, 2);
            let ys: Vec<f64> = (0..12).map(|_| StandardNormal.sample(&mut rng)).collect();
            let theta = vec![
                rng.random_range(-1.0..1.0),
                rng.random_range(-2.0..0.5),
                rng.random_range(-2.0..0.5),
                rng.random_range(-8.0..-1.0),
            ];
            let (_, grad) = nlml_with_grad(&pts, &ys, &KernelParams::from_log(&theta)).unwrap();
            for k in 0..theta.len() {
                let h = 1e-5;
                let mut up = theta.clone();
                up[k] += h;
                let mut dn = theta.clone();
                dn[k] -= h;
                let fu = nlml_with_grad(&pts, &ys, &KernelParams::from_log(&up)).unwrap().0;
                let fd = nlml_with_grad(&pts, &ys, &KernelParams::from_log(&dn)).unwrap().0;
                let fdiff = (fu - fd) / (2.0 * h);
                let rel = (grad[k] - fdiff).abs() / fdiff.abs().max(1e-3);
                assert!(rel <= 1e-4, "trial {trial} coord {k}: analytic {} vs fd {fdiff}", grad[k]);
            }
        }
    }

    #[test]
    fn constant_targets_predict_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = random_points(&mut rng, 8, 2);
        let s = Surrogate::fit(&pts, &[3.25; 8], 4, 0).unwrap();
        for q in random_points(&mut rng, 20, 2) {
            assert!((s.predict(&q).mean - 3.25).abs() <= 1e-6);
        }
    }

    #[test]
    fn fit_beats_generating_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts = random_points(&mut rng, 8, 2);
        let gen = KernelParams { signal_variance: 1.0, lengthscales: vec![0.3, 0.5], noise_variance: NOISE_FLOOR };
        // Draw from the prior through the Gram factor.
        let n = pts.len();
        let mut l = gram(&pts, &gen, 0.0);
        assert!(cholesky_in_place(&mut l, n));
        let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ys: Vec<f64> = (0..n).map(|i| (0..=i).map(|k| l[i * n + k] * eps[k]).sum()).collect();

        let fitted = Surrogate::fit(&pts, &ys, 4, 1).unwrap();
        let (_, _, z) = standardize(&ys);
        // Compare on the same standardized targets the fit sees.
        let (_, std, _) = standardize(&ys);
        let gen_std = KernelParams {
            signal_variance: gen.signal_variance / (std * std),
            lengthscales: gen.lengthscales.clone(),
            noise_variance: gen.noise_variance / (std * std),
        };
        let at_gen = nlml_with_grad(&pts, &z, &gen_std).unwrap().0;
        assert!(fitted.nlml() <= at_gen + 1e-6, "fitted {} vs generator {}", fitted.nlml(), at_gen);
    }

    #[test]
    fn nlml_trace_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pts = random_points(&mut rng, 25, 2);
        let ys: Vec<f64> = pts.iter().map(|p| (6.0 * p.coords()[0]).sin() + p.coords()[1]).collect();
        let s = Surrogate::fit(&pts, &ys, 3, 2).unwrap();
        assert!(s.nlml_trace().len() > 1);
        for w in s.nlml_trace().windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!((s.nlml() - s.nlml_trace().last().unwrap()).abs() < 1e-8);
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pts = random_points(&mut rng, 15, 2);
        let ys: Vec<f64> = (0..15).map(|_| rng.random::<f64>()).collect();
        let a = Surrogate::fit(&pts, &ys, 4, 9).unwrap();
        let b = Surrogate::fit(&pts, &ys, 4, 9).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn chol_reconstructs_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut pts = random_points(&mut rng, 10, 3);
        pts.push(pts[0].clone());
        let ys: Vec<f64> = (0..11).map(|_| rng.random::<f64>()).collect();
        let s = Surrogate::fit(&pts, &ys, 2, 0).unwrap();
        let n = pts.len();
        let k = gram(&pts, s.params(), 0.0);
        let l = s.chol_factor();
        let mut err = 0.0;
        let mut norm = 0.0;
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n).map(|m| l[i * n + m] * l[j * n + m]).sum();
                err += (r - k[i * n + j]).powi(2);
                norm += k[i * n + j].powi(2);
            }
        }
        assert!((err / norm).sqrt() <= 1e-8);
        let mean = ys.iter().sum::<f64>() / n as f64;
        for (z, y) in s.training_targets().iter().zip(&ys) {
            assert!((z * s.target_std() + s.target_mean() - y).abs() < 1e-12);
            let _ = mean;
        }
    }

    #[test]
    fn interpolates_training_points() {
        let pts = vec![pt(&[0.1, 0.2]), pt(&[0.5, 0.5]), pt(&[0.9, 0.3])];
        // Residual bias at the noise floor is about 1e-6 * |y - mean|, so keep
        // targets within one unit of their mean.
        let ys = [0.5, -0.3, 0.2];
        let params = KernelParams::isotropic(2, 0.3);
        let s = Surrogate::with_params(&pts, &ys, params.clone()).unwrap();
        for (p, y) in pts.iter().zip(ys) {
            let pred = s.predict(p);
            assert!((pred.mean - y).abs() <= 1e-6, "{} vs {y}", pred.mean);
            assert!(pred.variance <= 1e-6 * params.signal_variance * s.target_std().powi(2));
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let pts = vec![pt(&[0.0, 0.0]), pt(&[0.02, 0.01])];
        let s = Surrogate::with_params(&pts, &[1.0, 3.0], KernelParams::isotropic(2, 0.01)).unwrap();
        let far = s.predict(&pt(&[1.0, 1.0]));
        assert!((far.mean - s.target_mean()).abs() <= 0.01 * s.target_std());
        assert!((far.variance - s.prior_variance()).abs() <= 0.01 * s.prior_variance());
    }

    #[test]
    fn two_point_closed_form() {
        let params = KernelParams { signal_variance: 1.7, lengthscales: vec![0.35], noise_variance: 2e-3 };
        let (x1, x2, xq) = (0.2, 0.55, 0.41);
        let (y1, y2) = (1.5, -0.25);
        let s = Surrogate::with_params(&[pt(&[x1]), pt(&[x2])], &[y1, y2], params.clone()).unwrap();
        let pred = s.predict(&pt(&[xq]));

        let k = |a: f64, b: f64| {
            let r = (a - b).abs() / 0.35;
            let t = 5f64.sqrt() * r;
            1.7 * (1.0 + t + t * t / 3.0) * (-t).exp()
        };
        // Standardize by hand: mean 0.625, population std 0.875.
        let (m, sd) = (0.625, 0.875);
        let (z1, z2) = ((y1 - m) / sd, (y2 - m) / sd);
        let (a, b, d) = (k(x1, x1) + 2e-3, k(x1, x2), k(x2, x2) + 2e-3);
        let det = a * d - b * b;
        let (i11, i12, i22) = (d / det, -b / det, a / det);
        let (k1, k2) = (k(xq, x1), k(xq, x2));
        let mean_z = k1 * (i11 * z1 + i12 * z2) + k2 * (i12 * z1 + i22 * z2);
        let var_z = 1.7 - (k1 * (i11 * k1 + i12 * k2) + k2 * (i12 * k1 + i22 * k2));
        assert!((pred.mean - (m + sd * mean_z)).abs() <= 1e-10);
        assert!((pred.variance - var_z * sd * sd).abs() <= 1e-10);
    }

    #[test]
    fn batch_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let pts = random_points(&mut rng, 10, 2);
        let ys: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
        let s = Surrogate::fit(&pts, &ys, 2, 0).unwrap();
        let qs = random_points(&mut rng, 50, 2);
        let looped: Vec<Prediction> = qs.iter().map(|q| s.predict(q)).collect();
        assert_eq!(s.predict_batch(&qs), looped);
        assert_eq!(s.predict_batch(&qs[..1]), vec![s.predict(&qs[0])]);
        assert!(s.predict_batch(&[]).is_empty());
        let big = random_points(&mut rng, 600, 2);
        let looped: Vec<Prediction> = big.iter().map(|q| s.predict(q)).collect();
        assert_eq!(s.predict_batch(&big), looped);
    }

    #[test]
    fn rejects_bad_training_data() {
        assert!(Surrogate::fit(&[pt(&[0.1])], &[1.0], 1, 0).is_err());
        assert!(Surrogate::fit(&[pt(&[0.1]), pt(&[0.2])], &[1.0, f64::NAN], 1, 0).is_err());
        assert!(Surrogate::fit(&[pt(&[0.1]), pt(&[0.2])], &[1.0], 1, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn posterior_variance_bounded_and_shrinking(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_points(&mut rng, 9, 2);
            let ys: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
            let params = KernelParams {
                signal_variance: rng.random_range(0.2..3.0),
                lengthscales: vec![rng.random_range(0.05..1.0), rng.random_range(0.05..1.0)],
                noise_variance: 1e-3,
            };
            let small = Surrogate::with_params(&pts[..8], &ys[..8], params.clone()).unwrap();
            let large = Surrogate::with_params(&pts, &ys, params.clone()).unwrap();
            for q in random_points(&mut rng, 10, 2) {
                let v_small = small.predict(&q).variance / small.target_std().powi(2);
                let v_large = large.predict(&q).variance / large.target_std().powi(2);
                prop_assert!(v_small <= params.signal_variance + 1e-8);
                prop_assert!(v_large <= v_small + 1e-8);
            }
        }

        #[test]
        fn gram_is_factorizable(seed in 0u64..1000, n in 2usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_points(&mut rng, n, 3);
            let params = KernelParams {
                signal_variance: rng.random_range(1e-3..1e3),
                lengthscales: (0..3).map(|_| rng.random_range(0.01..10.0)).collect(),
                noise_variance: 0.0,
            };
            let params = KernelParams { noise_variance: NOISE_FLOOR * params.signal_variance, ..params };
            let ys = vec![0.0; n];
            prop_assert!(Surrogate::with_params(&pts, &ys, params).is_ok());
        }
    }
}
