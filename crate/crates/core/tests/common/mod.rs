//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod gp;
pub mod gradcheck;

use nodule_core::seed;
use nodule_core::volume::{Axis, Volume};
use rand::Rng;

pub fn random_patch(side: usize, seed_value: u64) -> Volume<f64> {
    let mut rng = seed::rng(seed_value);
    let vox = (0..side * side * side)
        .map(|_| rng.random_range(-1000.0..1000.0f64).round() / 4.0)
        .collect();
    Volume::new([side; 3], [1.0; 3], vox).unwrap()
}

/// Per-line sort-and-pick median, image indexed `u + side * v`.
pub fn median_oracle(patch: &Volume<f64>, axis: Axis) -> Vec<f64> {
    let s = patch.dims()[0];
    let mut out = Vec::with_capacity(s * s);
    for v in 0..s {
        for u in 0..s {
            let mut line: Vec<f64> = (0..s)
                .map(|k| match axis {
                    Axis::X => patch.get(k, u, v),
                    Axis::Y => patch.get(u, k, v),
                    Axis::Z => patch.get(u, v, k),
                })
                .collect();
            line.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let m = if s % 2 == 1 {
                line[s / 2]
            } else {
                (line[s / 2 - 1] + line[s / 2]) / 2.0
            };
            out.push(m);
        }
    }
    out
}

/// Ordinary least squares with intercept through the normal equations.
pub fn ols(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    use nalgebra::{DMatrix, DVector};
    let n = x.len();
    let d = x[0].len();
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j == d { 1.0 } else { x[i][j] });
    let b = DVector::from_column_slice(y);
    let sol = (a.transpose() * &a).try_inverse().expect("full rank design") * a.transpose() * b;
    (sol.as_slice()[..d].to_vec(), sol[d])
}
