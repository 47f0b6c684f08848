//! Linear comparison regressors: LASSO, Elastic Net and linear ε-SVR.
//!
//! All fitters standardize features internally (population mean and standard
//! deviation) and store the transform in the returned [`LinearModel`], so
//! callers always pass raw features.

mod svr;
mod tune;

pub use svr::{fit_svr, fit_svr_traced, SvrTrace};
pub use tune::{
    lambda_grid, select_elastic_net, select_lasso, select_svr, Selection, ALPHA_GRID, C_GRID, EPSILON_GRID,
    LAMBDA_GRID_POINTS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{dot, Real};

/// Solver limits shared by the coordinate-descent fitters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 10_000,
        }
    }
}

/// A fitted linear model over standardized features.
///
/// `weights` act on `(x - mean) / std`; features that were constant at fit
/// time have `std = 1` and weight 0. `converged` is false when the solver hit
/// its iteration cap, in which case the model holds the last iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<T> {
    pub weights: Vec<T>,
    pub intercept: T,
    pub mean: Vec<T>,
    pub std: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Real> LinearModel<T> {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Weights and intercept in the original feature units.
    pub fn raw_coefficients(&self) -> (Vec<T>, T) {
        let w: Vec<T> = self.weights.iter().zip(&self.std).map(|(&w, &s)| w / s).collect();
        let b = self.intercept - dot(&w, &self.mean);
        (w, b)
    }

    pub fn predict_one(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "query has {} features, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        let mut acc = self.intercept;
        for j in 0..x.len() {
            acc += (x[j] - self.mean[j]) / self.std[j] * self.weights[j];
        }
        Ok(acc)
    }
}

/// Predictions `standardize(xq) · w + b` for every query row.
pub fn predict_linear<T: Real>(model: &LinearModel<T>, xq: &Matrix<T>) -> Result<Vec<T>> {
    if xq.cols() != model.dim() {
        return Err(Error::Shape(format!(
            "query has {} features, model expects {}",
            xq.cols(),
            model.dim()
        )));
    }
    xq.row_iter().map(|r| model.predict_one(r)).collect()
}

/// Column-major standardized copy of the training data.
pub(crate) struct Standardized<T> {
    pub n: usize,
    pub d: usize,
    pub cols: Vec<Vec<T>>,
    pub mean: Vec<T>,
    pub std: Vec<T>,
    /// false for constant columns
    pub active: Vec<bool>,
    pub y_mean: T,
    pub yc: Vec<T>,
}

impl<T: Real> Standardized<T> {
    pub fn new(x: &Matrix<T>, y: &[T]) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if n < 2 {
            return Err(Error::invalid("features", "need at least two training rows"));
        }
        if y.len() != n {
            return Err(Error::Shape(format!("{} targets for {n} rows", y.len())));
        }
        if x.data().iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("training data", "non-finite value"));
        }
        let nt = T::from_usize_lossy(n);
        let mut cols = Vec::with_capacity(d);
        let mut mean = Vec::with_capacity(d);
        let mut std = Vec::with_capacity(d);
        let mut active = Vec::with_capacity(d);
        for j in 0..d {
            let mut c = x.column(j);
            let m = c.iter().copied().sum::<T>() / nt;
            let var = c.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / nt;
            let s = var.sqrt();
            // spread below rounding noise of the mean counts as constant
            let live = s > T::epsilon() * (T::one() + m.abs()) * T::lit(16.0);
            let s = if live { s } else { T::one() };
            for v in &mut c {
                *v = if live { (*v - m) / s } else { T::zero() };
            }
            cols.push(c);
            mean.push(m);
            std.push(s);
            active.push(live);
        }
        // shifted by the first target so constant targets stay exact
        let y0 = y[0];
        let y_mean = y0 + y.iter().map(|&v| v - y0).sum::<T>() / nt;
        let yc = y.iter().map(|&v| v - y_mean).collect();
        Ok(Self {
            n,
            d,
            cols,
            mean,
            std,
            active,
            y_mean,
            yc,
        })
    }

    /// `max_j |x̃_jᵀ yc| / n`.
    pub fn max_correlation(&self) -> T {
        let nt = T::from_usize_lossy(self.n);
        self.cols
            .iter()
            .map(|c| (dot(c, &self.yc) / nt).abs())
            .fold(T::zero(), T::max)
    }

    pub fn model(self, weights: Vec<T>, intercept: T, converged: bool, iterations: usize) -> LinearModel<T> {
        LinearModel {
            weights,
            intercept,
            mean: self.mean,
            std: self.std,
            converged,
            iterations,
        }
    }
}

/// Smallest λ for which the LASSO solution is all zeros:
/// `max_j |x̃_jᵀ(Y − Ȳ)| / n` over standardized columns.
pub fn lambda_max<T: Real>(x: &Matrix<T>, y: &[T]) -> Result<T> {
    Ok(Standardized::new(x, y)?.max_correlation())
}

fn soft_threshold<T: Real>(v: T, t: T) -> T {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        T::zero()
    }
}

/// LASSO: `(1/2n)‖Y − Xw − b‖² + λ‖w‖₁`.
pub fn fit_lasso<T: Real>(x: &Matrix<T>, y: &[T], lambda: T, opts: SolverOptions) -> Result<LinearModel<T>> {
    fit_elastic_net(x, y, lambda, T::one(), opts)
}

/// Elastic net: `(1/2n)‖Y − Xw − b‖² + λ(α‖w‖₁ + (1−α)/2 ‖w‖₂²)` by cyclic
/// coordinate descent, stopping when the largest weight change in a sweep
/// drops below `opts.tol`.
pub fn fit_elastic_net<T: Real>(
    x: &Matrix<T>,
    y: &[T],
    lambda: T,
    alpha: T,
    opts: SolverOptions,
) -> Result<LinearModel<T>> {
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(Error::invalid("lambda", "must be finite and non-negative"));
    }
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(Error::invalid("alpha", "must lie in [0, 1]"));
    }
    if opts.max_iter == 0 {
        return Err(Error::invalid("max_iter", "must be positive"));
    }
    let s = Standardized::new(x, y)?;
    let nt = T::from_usize_lossy(s.n);
    let l1 = lambda * alpha;
    let denom = T::one() + lambda * (T::one() - alpha);
    let tol = T::lit(opts.tol);
    let mut w = vec![T::zero(); s.d];
    let mut r = s.yc.clone();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut max_change = T::zero();
        for j in 0..s.d {
            if !s.active[j] {
                continue;
            }
            let col = &s.cols[j];
            // columns have unit mean square, so ρ includes the current weight
            let rho = dot(col, &r) / nt + w[j];
            let new = soft_threshold(rho, l1) / denom;
            let delta = new - w[j];
            if delta != T::zero() {
                for (ri, &c) in r.iter_mut().zip(col) {
                    *ri -= delta * c;
                }
                w[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < tol {
            converged = true;
            break;
        }
    }
    let b = s.y_mean;
    Ok(s.model(w, b, converged, iterations))
}
