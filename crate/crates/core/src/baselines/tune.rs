//! Validation-split grid search for the baseline hyperparameters.

use serde::{Deserialize, Serialize};

use super::{fit_elastic_net, fit_lasso, fit_svr, predict_linear, LinearModel, SolverOptions, Standardized};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

pub const LAMBDA_GRID_POINTS: usize = 10;
/// decades spanned by the λ grid below λ_max
const LAMBDA_DECADES: f64 = 3.0;
pub const ALPHA_GRID: [f64; 3] = [0.25, 0.5, 0.75];
pub const C_GRID: [f64; 3] = [0.1, 1.0, 10.0];
pub const EPSILON_GRID: [f64; 3] = [0.05, 0.1, 0.2];

/// Chosen hyperparameters and the validation mean squared error they scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Selection {
    Lasso {
        lambda: f64,
        validation_mse: f64,
    },
    ElasticNet {
        lambda: f64,
        alpha: f64,
        validation_mse: f64,
    },
    Svr {
        c: f64,
        epsilon: f64,
        validation_mse: f64,
    },
}

impl Selection {
    pub fn validation_mse(&self) -> f64 {
        match *self {
            Selection::Lasso { validation_mse, .. }
            | Selection::ElasticNet { validation_mse, .. }
            | Selection::Svr { validation_mse, .. } => validation_mse,
        }
    }

    /// Fits the selected configuration on `(x, y)`.
    pub fn fit<T: Real>(&self, x: &Matrix<T>, y: &[T], opts: SolverOptions) -> Result<LinearModel<T>> {
        match *self {
            Selection::Lasso { lambda, .. } => fit_lasso(x, y, T::lit(lambda), opts),
            Selection::ElasticNet { lambda, alpha, .. } => fit_elastic_net(x, y, T::lit(lambda), T::lit(alpha), opts),
            Selection::Svr { c, epsilon, .. } => fit_svr(x, y, T::lit(c), T::lit(epsilon), opts),
        }
    }
}

/// Log-spaced λ values from `lambda_max` down three decades, largest first.
pub fn lambda_grid(lambda_max: f64) -> Vec<f64> {
    (0..LAMBDA_GRID_POINTS)
        .map(|k| lambda_max * 10f64.powf(-LAMBDA_DECADES * k as f64 / (LAMBDA_GRID_POINTS - 1) as f64))
        .collect()
}

fn mse<T: Real>(model: &LinearModel<T>, x: &Matrix<T>, y: &[T]) -> Result<f64> {
    let p = predict_linear(model, x)?;
    Ok(p.iter().zip(y).map(|(&a, &b)| (a - b).as_f64().powi(2)).sum::<f64>() / y.len() as f64)
}

fn check_validation<T: Real>(x: &Matrix<T>, y: &[T]) -> Result<()> {
    if y.is_empty() || x.rows() != y.len() {
        return Err(Error::invalid(
            "validation split",
            "need matching, non-empty features and targets",
        ));
    }
    Ok(())
}

/// Keeps the first candidate with the smallest validation error.
fn argmin(candidates: impl IntoIterator<Item = Result<Selection>>) -> Result<Selection> {
    let mut best: Option<Selection> = None;
    for c in candidates {
        let c = c?;
        if best.is_none_or(|b| c.validation_mse() < b.validation_mse()) {
            best = Some(c);
        }
    }
    best.ok_or_else(|| Error::invalid("grid", "no candidates"))
}

pub fn select_lasso<T: Real>(
    x: &Matrix<T>,
    y: &[T],
    xv: &Matrix<T>,
    yv: &[T],
    opts: SolverOptions,
) -> Result<Selection> {
    check_validation(xv, yv)?;
    let lmax = Standardized::new(x, y)?.max_correlation().as_f64();
    argmin(lambda_grid(lmax).into_iter().map(|lambda| {
        let m = fit_lasso(x, y, T::lit(lambda), opts)?;
        Ok(Selection::Lasso {
            lambda,
            validation_mse: mse(&m, xv, yv)?,
        })
    }))
}

pub fn select_elastic_net<T: Real>(
    x: &Matrix<T>,
    y: &[T],
    xv: &Matrix<T>,
    yv: &[T],
    opts: SolverOptions,
) -> Result<Selection> {
    check_validation(xv, yv)?;
    let corr = Standardized::new(x, y)?.max_correlation().as_f64();
    let mut out = Vec::new();
    for &alpha in &ALPHA_GRID {
        // all-zero threshold for this mixing weight
        for lambda in lambda_grid(corr / alpha) {
            let m = fit_elastic_net(x, y, T::lit(lambda), T::lit(alpha), opts)?;
            out.push(Ok(Selection::ElasticNet {
                lambda,
                alpha,
                validation_mse: mse(&m, xv, yv)?,
            }));
        }
    }
    argmin(out)
}

pub fn select_svr<T: Real>(x: &Matrix<T>, y: &[T], xv: &Matrix<T>, yv: &[T], opts: SolverOptions) -> Result<Selection> {
    check_validation(xv, yv)?;
    let mut out = Vec::new();
    for &c in &C_GRID {
        for &epsilon in &EPSILON_GRID {
            let m = fit_svr(x, y, T::lit(c), T::lit(epsilon), opts)?;
            out.push(Ok(Selection::Svr {
                c,
                epsilon,
                validation_mse: mse(&m, xv, yv)?,
            }));
        }
    }
    argmin(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn grid_shape() {
        let g = lambda_grid(2.0);
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 2.0);
        assert!((g[9] - 2e-3).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn selection_prefers_signal() {
        let mut rng = crate::seed::rng(1);
        let mut gen = |n: usize| {
            let x = Matrix::from_vec(n, 4, (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let y: Vec<f64> = (0..n)
                .map(|i| 3.0 * x.row(i)[0] + 0.05 * rng.random_range(-1.0..1.0))
                .collect();
            (x, y)
        };
        let (x, y) = gen(60);
        let (xv, yv) = gen(20);
        let opts = SolverOptions::default();
        for sel in [
            select_lasso(&x, &y, &xv, &yv, opts).unwrap(),
            select_elastic_net(&x, &y, &xv, &yv, opts).unwrap(),
            select_svr(&x, &y, &xv, &yv, opts).unwrap(),
        ] {
            assert!(sel.validation_mse() < 0.1, "{sel:?}");
            let m = sel.fit(&x, &y, opts).unwrap();
            assert!(m.raw_coefficients().0[0] > 2.0);
        }
    }
}
