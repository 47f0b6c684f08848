use nodule_core::cnn::{backward, forward, softmax_cross_entropy, NetworkConfig, NetworkParams};
use nodule_core::seed;
use nodule_core::tensor::ProjectionTensor;
use rand::Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Gradients below this magnitude are compared in absolute terms.
const FLOOR: f64 = 1e-6;

fn loss(params: &NetworkParams<f64>, x: &ProjectionTensor<f64>, label: usize) -> f64 {
    let (logits, _) = forward(params, x).unwrap();
    softmax_cross_entropy(&logits, label).unwrap().0
}

/// Largest relative error between backprop and central differences.
pub fn max_relative_error(cfg: &NetworkConfig, seed: u64) -> f64 {
    let mut rng = seed::rng(seed);
    let mut params = NetworkParams::he_init(cfg, &mut rng).unwrap();
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            // nonzero biases so no unit sits exactly at a ReLU kink
            *v += rng.random_range(-0.05..0.05);
        }
    }
    let s = cfg.input_side;
    let x = ProjectionTensor::new(s, (0..3 * s * s).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let label = rng.random_range(0..2);
    let (logits, cache) = forward(&params, &x).unwrap();
    let (_, dlogits) = softmax_cross_entropy(&logits, label).unwrap();
    let grads = backward(&params, &cache, &dlogits).unwrap();
    let analytic: Vec<f64> = grads.tensors().flat_map(|t| t.iter().copied()).collect();

    let mut worst = 0.0f64;
    let mut k = 0;
    let n_tensors = params.tensors().count();
    for ti in 0..n_tensors {
        let len = params.tensors().nth(ti).unwrap().len();
        for j in 0..len {
            let orig = params.tensors().nth(ti).unwrap()[j];
            params.tensors_mut().nth(ti).unwrap()[j] = orig + STEP;
            let up = loss(&params, &x, label);
            params.tensors_mut().nth(ti).unwrap()[j] = orig - STEP;
            let down = loss(&params, &x, label);
            params.tensors_mut().nth(ti).unwrap()[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(rel);
            k += 1;
        }
    }
    assert_eq!(k, analytic.len());
    worst
}
