//! Layer kernels on flat `[c][h][w]` buffers.

use super::config::{ConvSpec, Shape};
use crate::error::{Error, Result};
use crate::scalar::{dot, Real};

/// Output columns `ox` whose input column `ox*stride + k - pad` is in range.
#[inline]
fn valid_range(k: usize, pad: usize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let start = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let end = if in_len + pad > k {
        ((in_len - 1 + pad - k) / stride + 1).min(out_len)
    } else {
        0
    };
    (start, end.max(start))
}

pub fn conv_output_shape(input: Shape, spec: &ConvSpec) -> Option<Shape> {
    Some(Shape {
        c: spec.out_channels,
        h: spec.output_extent(input.h)?,
        w: spec.output_extent(input.w)?,
    })
}

/// Cross-correlation with zero padding. Weights are `[out][in][ky][kx]`.
pub fn conv2d_forward<T: Real>(input: &[T], shape: Shape, weights: &[T], bias: &[T], spec: &ConvSpec) -> Vec<T> {
    let out_shape = conv_output_shape(shape, spec).expect("kernel fits input");
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding);
    let (oh, ow) = (out_shape.h, out_shape.w);
    let mut out = vec![T::zero(); out_shape.len()];
    for o in 0..spec.out_channels {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        plane.fill(bias[o]);
        for i in 0..shape.c {
            let inp = &input[i * shape.h * shape.w..(i + 1) * shape.h * shape.w];
            for ky in 0..k {
                let (oy0, oy1) = valid_range(ky, p, s, shape.h, oh);
                for kx in 0..k {
                    let wv = weights[((o * shape.c + i) * k + ky) * k + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    let (ox0, ox1) = valid_range(kx, p, s, shape.w, ow);
                    for oy in oy0..oy1 {
                        let iy = oy * s + ky - p;
                        let in_row = &inp[iy * shape.w..(iy + 1) * shape.w];
                        let out_row = &mut plane[oy * ow..(oy + 1) * ow];
                        if s == 1 {
                            let off = kx + ox0 - p;
                            for (dst, &src) in out_row[ox0..ox1].iter_mut().zip(&in_row[off..off + ox1 - ox0]) {
                                *dst += wv * src;
                            }
                        } else {
                            for ox in ox0..ox1 {
                                out_row[ox] += wv * in_row[ox * s + kx - p];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight, bias and input gradients of a convolution.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Real>(
    input: &[T],
    shape: Shape,
    weights: &[T],
    spec: &ConvSpec,
    dout: &[T],
    dweights: &mut [T],
    dbias: &mut [T],
    dinput: Option<&mut [T]>,
) {
    let out_shape = conv_output_shape(shape, spec).expect("kernel fits input");
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding);
    let (oh, ow) = (out_shape.h, out_shape.w);
    let mut dinput = dinput;
    for o in 0..spec.out_channels {
        let dplane = &dout[o * oh * ow..(o + 1) * oh * ow];
        dbias[o] += dplane.iter().copied().sum::<T>();
        for i in 0..shape.c {
            let inp = &input[i * shape.h * shape.w..(i + 1) * shape.h * shape.w];
            for ky in 0..k {
                let (oy0, oy1) = valid_range(ky, p, s, shape.h, oh);
                for kx in 0..k {
                    let widx = ((o * shape.c + i) * k + ky) * k + kx;
                    let wv = weights[widx];
                    let (ox0, ox1) = valid_range(kx, p, s, shape.w, ow);
                    let mut acc = T::zero();
                    for oy in oy0..oy1 {
                        let iy = oy * s + ky - p;
                        let drow = &dplane[oy * ow..(oy + 1) * ow];
                        let irow = iy * shape.w;
                        if s == 1 {
                            let off = kx + ox0 - p;
                            acc += dot(&drow[ox0..ox1], &inp[irow + off..irow + off + ox1 - ox0]);
                            if let Some(din) = dinput.as_deref_mut() {
                                let dst = &mut din[i * shape.h * shape.w + irow + off..][..ox1 - ox0];
                                for (d, &g) in dst.iter_mut().zip(&drow[ox0..ox1]) {
                                    *d += wv * g;
                                }
                            }
                        } else {
                            for ox in ox0..ox1 {
                                let ix = ox * s + kx - p;
                                acc += drow[ox] * inp[irow + ix];
                                if let Some(din) = dinput.as_deref_mut() {
                                    din[i * shape.h * shape.w + irow + ix] += wv * drow[ox];
                                }
                            }
                        }
                    }
                    dweights[widx] += acc;
                }
            }
        }
    }
}

pub fn relu_in_place<T: Real>(x: &mut [T]) {
    for v in x {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// Zeroes gradient entries whose activation was clipped by ReLU.
pub fn relu_backward_in_place<T: Real>(activation: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if !(a > T::zero()) {
            *g = T::zero();
        }
    }
}

/// 2x2 stride-2 max-pool. Returns the pooled map and, per output, the flat
/// input index of the first maximum in its window.
pub fn maxpool2_forward<T: Real>(input: &[T], shape: Shape) -> (Vec<T>, Vec<usize>, Shape) {
    let out = Shape {
        c: shape.c,
        h: shape.h / 2,
        w: shape.w / 2,
    };
    let mut values = Vec::with_capacity(out.len());
    let mut argmax = Vec::with_capacity(out.len());
    for c in 0..shape.c {
        let base = c * shape.h * shape.w;
        for oy in 0..out.h {
            for ox in 0..out.w {
                let mut best_idx = base + 2 * oy * shape.w + 2 * ox;
                let mut best = input[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * shape.w + 2 * ox + dx;
                    if input[idx] > best {
                        best = input[idx];
                        best_idx = idx;
                    }
                }
                values.push(best);
                argmax.push(best_idx);
            }
        }
    }
    (values, argmax, out)
}

/// Routes each pooled gradient to its recorded argmax input.
pub fn maxpool2_backward<T: Real>(argmax: &[usize], dout: &[T], input_len: usize) -> Vec<T> {
    let mut din = vec![T::zero(); input_len];
    for (&idx, &g) in argmax.iter().zip(dout) {
        din[idx] += g;
    }
    din
}

/// `W x + b` with `W` stored `[out][in]`.
pub fn dense_forward<T: Real>(input: &[T], weights: &[T], bias: &[T]) -> Vec<T> {
    let n_in = input.len();
    bias.iter()
        .enumerate()
        .map(|(j, &b)| b + dot(&weights[j * n_in..(j + 1) * n_in], input))
        .collect()
}

/// Accumulates dense-layer gradients and returns the input gradient.
pub fn dense_backward<T: Real>(input: &[T], weights: &[T], dout: &[T], dweights: &mut [T], dbias: &mut [T]) -> Vec<T> {
    let n_in = input.len();
    let mut din = vec![T::zero(); n_in];
    for (j, &g) in dout.iter().enumerate() {
        dbias[j] += g;
        if g == T::zero() {
            continue;
        }
        let wrow = &weights[j * n_in..(j + 1) * n_in];
        let drow = &mut dweights[j * n_in..(j + 1) * n_in];
        for i in 0..n_in {
            drow[i] += g * input[i];
            din[i] += g * wrow[i];
        }
    }
    din
}

/// Numerically stable softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `softmax(logits)` against `label`, with its gradient
/// `softmax(logits) - onehot(label)`.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::invalid("label", format!("{label} not below {}", logits.len())));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let log_sum = logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
    let loss = (log_sum - logits[label]).max(T::zero());
    let mut grad = softmax(logits);
    grad[label] -= T::one();
    Ok((loss, grad))
}
