use nalgebra::{DMatrix, DVector};
use nodule_core::gpr::KernelConfig;
use nodule_core::seed;
use rand::Rng;

/// Dense-inverse GP conditional with centered targets.
pub fn dense_posterior(x: &[Vec<f64>], y: &[f64], xq: &[Vec<f64>], k: &KernelConfig<f64>) -> (Vec<f64>, Vec<f64>) {
    let se = |a: &[f64], b: &[f64]| {
        let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        k.sigma_f * k.sigma_f * (-d2 / (2.0 * k.length_scale * k.length_scale)).exp()
    };
    let n = x.len();
    let kxx = DMatrix::from_fn(n, n, |i, j| {
        se(&x[i], &x[j]) + if i == j { k.sigma_n * k.sigma_n } else { 0.0 }
    });
    let inv = kxx.try_inverse().expect("invertible fixture");
    let ybar = y.iter().sum::<f64>() / n as f64;
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ybar));
    let mut mean = Vec::new();
    let mut var = Vec::new();
    for q in xq {
        let ks = DVector::from_iterator(n, x.iter().map(|xi| se(xi, q)));
        mean.push(ybar + (ks.transpose() * &inv * &yc)[(0, 0)]);
        var.push(se(q, q) - (ks.transpose() * &inv * &ks)[(0, 0)]);
    }
    (mean, var)
}

/// Training rows, targets, query rows and kernel.
pub type Fixture = (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, KernelConfig<f64>);

pub fn fixture(seed: u64) -> Fixture {
    let mut rng = seed::rng(seed);
    let n = rng.random_range(1..=8);
    let d = rng.random_range(1..=3);
    let point = |rng: &mut seed::Rng| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
    let x: Vec<Vec<f64>> = (0..n).map(|_| point(&mut rng)).collect();
    let xq: Vec<Vec<f64>> = (0..5).map(|_| point(&mut rng)).collect();
    let y = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
    let k = KernelConfig::new(
        rng.random_range(0.5..2.0),
        rng.random_range(0.5..2.0),
        rng.random_range(0.05..0.5),
    )
    .unwrap();
    (x, y, xq, k)
}
