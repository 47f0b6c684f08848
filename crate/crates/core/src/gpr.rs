//! Gaussian-process regression with a squared-exponential covariance.
//!
//! Targets are centered on their training mean (the constant mean function),
//! the training block carries `σ_n² I` observation noise, and predictions
//! return the posterior mean and latent variance of the conditional Gaussian.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::{sq_dist, Real};
use crate::seed;

/// Rows considered by [`median_heuristic`] before subsampling kicks in.
pub const MEDIAN_HEURISTIC_MAX_ROWS: usize = 1000;

/// Multipliers tried around the heuristic hyperparameters by
/// [`select_hyperparameters`].
pub const GRID_MULTIPLIERS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Covariance function plus observation noise.
///
/// [`KernelConfig`] is the squared-exponential implementation; other
/// stationary kernels can be plugged into [`GpModel::fit_with`].
pub trait Kernel<T: Real> {
    fn covariance(&self, a: &[T], b: &[T]) -> T;
    fn noise_variance(&self) -> T;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig<T> {
    pub sigma_f: T,
    pub length_scale: T,
    pub sigma_n: T,
}

impl<T: Real> KernelConfig<T> {
    pub fn new(sigma_f: T, length_scale: T, sigma_n: T) -> Result<Self> {
        let cfg = Self {
            sigma_f,
            length_scale,
            sigma_n,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_f > T::zero()) || !self.sigma_f.is_finite() {
            return Err(Error::invalid("sigma_f", "must be positive"));
        }
        if !(self.length_scale > T::zero()) || !self.length_scale.is_finite() {
            return Err(Error::invalid("length_scale", "must be positive"));
        }
        if !(self.sigma_n >= T::zero()) || !self.sigma_n.is_finite() {
            return Err(Error::invalid("sigma_n", "must be non-negative"));
        }
        Ok(())
    }
}

impl<T: Real> Kernel<T> for KernelConfig<T> {
    #[inline]
    fn covariance(&self, a: &[T], b: &[T]) -> T {
        let l2 = self.length_scale * self.length_scale;
        self.sigma_f * self.sigma_f * (-sq_dist(a, b) / (T::lit(2.0) * l2)).exp()
    }

    fn noise_variance(&self) -> T {
        self.sigma_n * self.sigma_n
    }
}

fn check_finite<T: Real>(m: &Matrix<T>, what: &str) -> Result<()> {
    if m.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features", format!("non-finite value in {what}")));
    }
    Ok(())
}

/// Covariances between every row of `a` and every row of `b`.
pub fn kernel_matrix<T: Real, K: Kernel<T>>(a: &Matrix<T>, b: &Matrix<T>, kernel: &K) -> Result<Matrix<T>> {
    if a.cols() != b.cols() {
        return Err(Error::Shape(format!("feature dimension {} vs {}", a.cols(), b.cols())));
    }
    check_finite(a, "left operand")?;
    check_finite(b, "right operand")?;
    let mut k = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let ai = a.row(i);
        for j in 0..b.rows() {
            k[(i, j)] = kernel.covariance(ai, b.row(j));
        }
    }
    Ok(k)
}

/// Median of the nonzero pairwise Euclidean distances between rows.
///
/// More than [`MEDIAN_HEURISTIC_MAX_ROWS`] rows are subsampled with `seed`.
pub fn median_heuristic<T: Real>(x: &Matrix<T>, seed: u64) -> Result<T> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::invalid("features", "median heuristic needs at least two rows"));
    }
    let rows: Vec<usize> = if n > MEDIAN_HEURISTIC_MAX_ROWS {
        let mut idx = index::sample(&mut seed::rng(seed), n, MEDIAN_HEURISTIC_MAX_ROWS).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let mut dists = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for (p, &i) in rows.iter().enumerate() {
        for &j in &rows[p + 1..] {
            let d = sq_dist(x.row(i), x.row(j));
            if d > T::zero() {
                dists.push(d.sqrt());
            }
        }
    }
    if dists.is_empty() {
        return Err(Error::invalid(
            "features",
            "all rows identical; length scale would be 0",
        ));
    }
    Ok(crate::scalar::median_in_place(&mut dists))
}

/// Posterior summary at a set of query points.
#[derive(Debug, Clone, PartialEq)]
pub struct GpPrediction<T> {
    pub mean: Vec<T>,
    pub variance: Vec<T>,
}

/// A fitted GP: training data, factor of `K + σ_n² I` and dual weights.
#[derive(Debug, Clone)]
pub struct GpModel<T, K = KernelConfig<T>> {
    x: Matrix<T>,
    y: Vec<T>,
    kernel: K,
    chol: Cholesky<T>,
    alpha: Vec<T>,
    y_mean: T,
    jitter: T,
}

impl<T: Real> GpModel<T> {
    pub fn fit(x: Matrix<T>, y: Vec<T>, cfg: KernelConfig<T>) -> Result<Self> {
        cfg.validate()?;
        Self::fit_with(x, y, cfg)
    }
}

impl<T: Real, K: Kernel<T>> GpModel<T, K> {
    /// Fits with an arbitrary kernel.
    ///
    /// A failed factorization is retried once with `1e-10 * trace / n` added
    /// to the diagonal when the model has observation noise. Noise-free models
    /// report the failing pivot directly.
    pub fn fit_with(x: Matrix<T>, y: Vec<T>, kernel: K) -> Result<Self> {
        let n = x.rows();
        if n == 0 {
            return Err(Error::invalid("features", "need at least one training row"));
        }
        if y.len() != n {
            return Err(Error::Shape(format!("{} targets for {n} rows", y.len())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("targets", "non-finite target"));
        }
        let noise = kernel.noise_variance();
        let mut k = kernel_matrix(&x, &x, &kernel)?;
        k.add_diagonal(noise);
        let mut jitter = T::zero();
        let chol = match Cholesky::factor(&k) {
            Ok(c) => c,
            Err(e) if noise > T::zero() => {
                jitter = T::lit(1e-10) * k.trace() / T::from_usize_lossy(n);
                k.add_diagonal(jitter);
                Cholesky::factor(&k).map_err(|_| e)?
            }
            Err(e) => return Err(e),
        };
        let y_mean = y.iter().copied().sum::<T>() / T::from_usize_lossy(n);
        let centered: Vec<T> = y.iter().map(|&v| v - y_mean).collect();
        let alpha = chol.solve(&centered);
        Ok(Self {
            x,
            y,
            kernel,
            chol,
            alpha,
            y_mean,
            jitter,
        })
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    pub fn y_mean(&self) -> T {
        self.y_mean
    }

    pub fn cholesky(&self) -> &Cholesky<T> {
        &self.chol
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.x
    }

    pub fn targets(&self) -> &[T] {
        &self.y
    }

    /// Diagonal jitter added during fitting (zero when none was needed).
    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn predict(&self, xq: &Matrix<T>) -> Result<GpPrediction<T>> {
        let kq = kernel_matrix(xq, &self.x, &self.kernel)?;
        let mut mean = Vec::with_capacity(xq.rows());
        let mut variance = Vec::with_capacity(xq.rows());
        for i in 0..xq.rows() {
            let ks = kq.row(i);
            mean.push(self.y_mean + crate::scalar::dot(ks, &self.alpha));
            let v = self.chol.solve_lower(ks);
            let prior = self.kernel.covariance(xq.row(i), xq.row(i));
            let var = prior - v.iter().map(|&a| a * a).sum::<T>();
            variance.push(var.max(T::zero()));
        }
        Ok(GpPrediction { mean, variance })
    }

    /// Log evidence of the centered targets under the fitted covariance.
    pub fn log_marginal_likelihood(&self) -> T {
        let n = T::from_usize_lossy(self.y.len());
        let fit: T = self
            .y
            .iter()
            .zip(&self.alpha)
            .map(|(&y, &a)| (y - self.y_mean) * a)
            .sum();
        let two_pi = T::lit(std::f64::consts::TAU);
        -T::lit(0.5) * fit - self.chol.sum_log_diag() - n / T::lit(2.0) * two_pi.ln()
    }
}

fn population_std<T: Real>(y: &[T]) -> T {
    let n = T::from_usize_lossy(y.len());
    let mean = y.iter().copied().sum::<T>() / n;
    (y.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n).sqrt()
}

/// Heuristic hyperparameters: median-distance length scale, `σ_f = std(Y)`,
/// `σ_n = 0.1 std(Y)` (falling back to 1 and 0.1 for constant targets).
pub fn default_hyperparameters<T: Real>(x: &Matrix<T>, y: &[T], seed: u64) -> Result<KernelConfig<T>> {
    let length_scale = median_heuristic(x, seed)?;
    let sd = population_std(y);
    let sd = if sd > T::zero() { sd } else { T::one() };
    KernelConfig::new(sd, length_scale, T::lit(0.1) * sd)
}

/// Grid search over length-scale and noise multipliers around the heuristic
/// defaults, maximizing the log marginal likelihood.
pub fn select_hyperparameters<T: Real>(x: &Matrix<T>, y: &[T], seed: u64) -> Result<(KernelConfig<T>, T)> {
    let base = default_hyperparameters(x, y, seed)?;
    let mut best: Option<(KernelConfig<T>, T)> = None;
    let mut last_err = None;
    for &ml in &GRID_MULTIPLIERS {
        for &mn in &GRID_MULTIPLIERS {
            let cfg = KernelConfig {
                length_scale: base.length_scale * T::lit(ml),
                sigma_n: base.sigma_n * T::lit(mn),
                ..base
            };
            match GpModel::fit(x.clone(), y.to_vec(), cfg) {
                Ok(m) => {
                    let lml = m.log_marginal_likelihood();
                    if best.as_ref().is_none_or(|(_, b)| lml > *b) {
                        best = Some((cfg, lml));
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
    }
    best.ok_or_else(|| last_err.expect("grid is non-empty"))
}
