//! Linear ε-insensitive SVR by dual coordinate descent.
//!
//! The dual over `β_i = α_i − α_i*` is
//! `min ½ βᵀQβ − ycᵀβ + ε‖β‖₁` subject to `β_i ∈ [−c, c]`, with `Q = X̃X̃ᵀ`
//! on standardized features and centered targets. Each coordinate step is an
//! exact one-dimensional minimization, so the dual objective is monotone.

use super::{LinearModel, SolverOptions, Standardized};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{median_in_place, Real};

/// Per-sweep diagnostics of the dual solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrTrace<T> {
    /// Dual objective after each sweep, preceded by the value at β = 0.
    pub objective: Vec<f64>,
    /// Largest `|β_i|` after each sweep.
    pub max_abs_dual: Vec<f64>,
    pub dual: Vec<T>,
}

pub fn fit_svr<T: Real>(x: &Matrix<T>, y: &[T], c: T, epsilon: T, opts: SolverOptions) -> Result<LinearModel<T>> {
    fit_svr_traced(x, y, c, epsilon, opts).map(|(m, _)| m)
}

pub fn fit_svr_traced<T: Real>(
    x: &Matrix<T>,
    y: &[T],
    c: T,
    epsilon: T,
    opts: SolverOptions,
) -> Result<(LinearModel<T>, SvrTrace<T>)> {
    if !(c > T::zero()) || !c.is_finite() {
        return Err(Error::invalid("c", "must be finite and positive"));
    }
    if !(epsilon >= T::zero()) || !epsilon.is_finite() {
        return Err(Error::invalid("epsilon", "must be finite and non-negative"));
    }
    if opts.max_iter == 0 {
        return Err(Error::invalid("max_iter", "must be positive"));
    }
    let s = Standardized::new(x, y)?;
    let (n, d) = (s.n, s.d);
    let rows: Vec<Vec<T>> = (0..n).map(|i| s.cols.iter().map(|col| col[i]).collect()).collect();
    let qdiag: Vec<T> = rows.iter().map(|r| r.iter().map(|&v| v * v).sum()).collect();
    let mut beta = vec![T::zero(); n];
    let mut w = vec![T::zero(); d];
    let tol = T::lit(opts.tol);

    let objective = |beta: &[T], w: &[T]| -> f64 {
        let half_ww: T = w.iter().map(|&v| v * v).sum::<T>() / T::lit(2.0);
        let lin: T = beta.iter().zip(&s.yc).map(|(&b, &yc)| epsilon * b.abs() - yc * b).sum();
        (half_ww + lin).as_f64()
    };

    let mut trace = SvrTrace {
        objective: vec![objective(&beta, &w)],
        max_abs_dual: Vec::new(),
        dual: Vec::new(),
    };
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut max_violation = T::zero();
        for i in 0..n {
            let qii = qdiag[i];
            if qii <= T::zero() {
                continue;
            }
            let row = &rows[i];
            let g = crate::scalar::dot(&w, row) - s.yc[i];
            let gp = g + epsilon;
            let gn = g - epsilon;
            let b = beta[i];
            let violation = if b == T::zero() {
                (-gp).max(gn).max(T::zero())
            } else if b >= c {
                gp.max(T::zero())
            } else if b <= -c {
                (-gn).max(T::zero())
            } else if b > T::zero() {
                gp.abs()
            } else {
                gn.abs()
            };
            max_violation = max_violation.max(violation);
            let step = if gp < qii * b {
                -gp / qii
            } else if gn > qii * b {
                -gn / qii
            } else {
                -b
            };
            let new = (b + step).max(-c).min(c);
            let delta = new - b;
            if delta != T::zero() {
                beta[i] = new;
                for (wj, &v) in w.iter_mut().zip(row) {
                    *wj += delta * v;
                }
            }
        }
        trace.objective.push(objective(&beta, &w));
        trace
            .max_abs_dual
            .push(beta.iter().fold(0.0f64, |m, b| m.max(b.as_f64().abs())));
        if max_violation < tol {
            converged = true;
            break;
        }
    }

    let intercept = s.y_mean + centered_intercept(&rows, &s.yc, &w, &beta, c, epsilon);
    trace.dual = beta;
    Ok((s.model(w, intercept, converged, iterations), trace))
}

/// Offset for the centered problem: the mean of `yc_i − w·x_i − ε·sign β_i`
/// over free support vectors. Without any, the median residual clamped into
/// the interval the KKT conditions allow.
fn centered_intercept<T: Real>(rows: &[Vec<T>], yc: &[T], w: &[T], beta: &[T], c: T, epsilon: T) -> T {
    let resid: Vec<T> = rows
        .iter()
        .zip(yc)
        .map(|(r, &y)| y - crate::scalar::dot(w, r))
        .collect();
    let mut sum = T::zero();
    let mut free = 0usize;
    let mut lo = T::neg_infinity();
    let mut hi = T::infinity();
    for (&r, &b) in resid.iter().zip(beta) {
        if b > T::zero() && b < c {
            sum += r - epsilon;
            free += 1;
        } else if b < T::zero() && b > -c {
            sum += r + epsilon;
            free += 1;
        } else if b == T::zero() {
            lo = lo.max(r - epsilon);
            hi = hi.min(r + epsilon);
        } else if b >= c {
            hi = hi.min(r - epsilon);
        } else {
            lo = lo.max(r + epsilon);
        }
    }
    if free > 0 {
        return sum / T::from_usize_lossy(free);
    }
    let mut buf = resid;
    let med = median_in_place(&mut buf);
    if lo <= hi {
        med.max(lo).min(hi)
    } else {
        med
    }
}
