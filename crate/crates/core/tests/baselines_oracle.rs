mod common;

use nalgebra::{DMatrix, DVector};
use nodule_core::baselines::{fit_elastic_net, fit_lasso, fit_svr_traced, lambda_max, SolverOptions};
use nodule_core::linalg::Matrix;
use nodule_core::seed;
use proptest::prelude::*;
use rand::Rng;

const TIGHT: SolverOptions = SolverOptions {
    tol: 1e-12,
    max_iter: 100_000,
};

fn problem(n: usize, d: usize, s: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = seed::rng(s);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|j| rng.random_range(-2.0..2.0) * (j + 1) as f64 + j as f64)
                .collect()
        })
        .collect();
    let y = x
        .iter()
        .map(|r| {
            1.5 + r.iter().enumerate().map(|(j, v)| (j as f64 - 1.0) * v).sum::<f64>() + rng.random_range(-0.5..0.5)
        })
        .collect();
    (x, y)
}

fn standardize(x: &[Vec<f64>]) -> DMatrix<f64> {
    let n = x.len();
    let d = x[0].len();
    let mut m = DMatrix::from_fn(n, d, |i, j| x[i][j]);
    for j in 0..d {
        let mu = m.column(j).sum() / n as f64;
        let sd = (m.column(j).iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64).sqrt();
        for i in 0..n {
            m[(i, j)] = (m[(i, j)] - mu) / sd;
        }
    }
    m
}

#[test]
fn lasso_at_zero_penalty_is_least_squares() {
    let (x, y) = problem(20, 3, 1);
    let m = fit_lasso(&Matrix::from_rows(&x).unwrap(), &y, 0.0, TIGHT).unwrap();
    let (w, b) = m.raw_coefficients();
    let (w_ref, b_ref) = common::ols(&x, &y);
    for (a, e) in w.iter().zip(&w_ref) {
        assert!((a - e).abs() < 1e-6, "{a} vs {e}");
    }
    assert!((b - b_ref).abs() < 1e-6);
}

#[test]
fn penalty_above_lambda_max_gives_zero() {
    let (x, y) = problem(30, 4, 2);
    let xm = Matrix::from_rows(&x).unwrap();
    let lm = lambda_max(&xm, &y).unwrap();
    for scale in [1.0, 1.5, 10.0] {
        let m = fit_lasso(&xm, &y, lm * scale, TIGHT).unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0));
    }
    let m = fit_lasso(&xm, &y, lm * 0.9, TIGHT).unwrap();
    assert!(m.weights.iter().any(|&w| w != 0.0));
}

#[test]
fn ridge_closed_form() {
    let (x, y) = problem(25, 3, 3);
    let n = x.len() as f64;
    let xs = standardize(&x);
    let ybar = y.iter().sum::<f64>() / n;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - ybar));
    for lambda in [0.01, 0.3, 2.0] {
        let m = fit_elastic_net(&Matrix::from_rows(&x).unwrap(), &y, lambda, 0.0, TIGHT).unwrap();
        let a = xs.transpose() * &xs / n + DMatrix::identity(3, 3) * lambda;
        let w_ref = a.try_inverse().unwrap() * xs.transpose() * &yc / n;
        for (a, e) in m.weights.iter().zip(w_ref.iter()) {
            assert!((a - e).abs() < 1e-6, "lambda {lambda}: {a} vs {e}");
        }
    }
}

#[test]
fn ols_residuals_orthogonal_to_features() {
    let (x, y) = problem(20, 3, 4);
    let m = fit_lasso(&Matrix::from_rows(&x).unwrap(), &y, 0.0, TIGHT).unwrap();
    let xs = standardize(&x);
    let r: Vec<f64> = x
        .iter()
        .zip(&y)
        .map(|(row, t)| t - m.predict_one(row).unwrap())
        .collect();
    for j in 0..3 {
        let g: f64 = xs.column(j).iter().zip(&r).map(|(a, b)| a * b).sum();
        assert!(g.abs() < 1e-8, "column {j}: {g}");
    }
}

#[test]
fn svr_trace_is_monotone_and_boxed() {
    let (x, y) = problem(40, 3, 5);
    for c in [0.1, 1.0, 10.0] {
        let opts = SolverOptions {
            tol: 1e-6,
            max_iter: 5000,
        };
        let (_, trace) = fit_svr_traced(&Matrix::from_rows(&x).unwrap(), &y, c, 0.1, opts).unwrap();
        for w in trace.objective.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0),
                "objective rose {} -> {}",
                w[0],
                w[1]
            );
        }
        assert!(trace.max_abs_dual.iter().all(|&m| m <= c));
        assert!(trace.dual.iter().all(|&b| b.abs() <= c));
    }
}

fn arb_problem() -> impl Strategy<Value = (u64, usize, f64)> {
    (any::<u64>(), 2usize..6, 0.01f64..0.9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lasso_kkt_conditions((s, d, frac) in arb_problem()) {
        let (x, y) = problem(30, d, s);
        let xm = Matrix::from_rows(&x).unwrap();
        let lambda = frac * lambda_max(&xm, &y).unwrap();
        let m = fit_lasso(&xm, &y, lambda, TIGHT).unwrap();
        prop_assert!(m.converged);
        let xs = standardize(&x);
        let n = x.len() as f64;
        let ybar = y.iter().sum::<f64>() / n;
        let w = DVector::from_column_slice(&m.weights);
        let r = DVector::from_iterator(x.len(), y.iter().map(|v| v - ybar)) - &xs * &w;
        let tol = 1e-8;
        for j in 0..d {
            let g = -(xs.column(j).dot(&r)) / n;
            if m.weights[j] == 0.0 {
                prop_assert!(g.abs() <= lambda + tol);
            } else {
                prop_assert!((g + lambda * m.weights[j].signum()).abs() <= tol);
            }
        }
    }

    #[test]
    fn l1_norm_shrinks_along_path((s, d, frac) in arb_problem()) {
        let (x, y) = problem(30, d, s);
        let xm = Matrix::from_rows(&x).unwrap();
        let lm = lambda_max(&xm, &y).unwrap();
        let norm = |l: f64| fit_lasso(&xm, &y, l, TIGHT).unwrap().weights.iter().map(|w| w.abs()).sum::<f64>();
        let small = norm(frac * lm * 0.5);
        let large = norm(frac * lm);
        prop_assert!(small >= large - 1e-9);
    }

    #[test]
    fn fitters_are_deterministic((s, d, frac) in arb_problem()) {
        let (x, y) = problem(20, d, s);
        let xm = Matrix::from_rows(&x).unwrap();
        prop_assert_eq!(
            fit_elastic_net(&xm, &y, frac, 0.5, TIGHT).unwrap(),
            fit_elastic_net(&xm, &y, frac, 0.5, TIGHT).unwrap()
        );
    }
}
