use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{NetworkConfig, Shape};
use super::layers;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::ProjectionTensor;

/// Weights and biases of one layer. Conv weights are `[out][in][ky][kx]`,
/// dense weights `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> LayerParams<T> {
    fn zeros(n_weights: usize, n_bias: usize) -> Self {
        Self {
            weights: vec![T::zero(); n_weights],
            bias: vec![T::zero(); n_bias],
        }
    }
}

/// All trainable parameters. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    config: NetworkConfig,
    pub conv: Vec<LayerParams<T>>,
    pub fc: Vec<LayerParams<T>>,
}

impl<T: Real> NetworkParams<T> {
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let shapes = config.conv_shapes()?;
        let conv = config
            .conv
            .iter()
            .zip(&shapes)
            .map(|(spec, input)| {
                LayerParams::zeros(
                    spec.out_channels * input.c * spec.kernel * spec.kernel,
                    spec.out_channels,
                )
            })
            .collect();
        let mut fan_in = shapes.last().expect("five conv shapes").len();
        let mut fc = Vec::with_capacity(config.fc.len());
        for &width in &config.fc {
            fc.push(LayerParams::zeros(width * fan_in, width));
            fan_in = width;
        }
        Ok(Self {
            config: config.clone(),
            conv,
            fc,
        })
    }

    /// He-normal weights (variance 2 / fan-in), zero biases.
    pub fn he_init<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let shapes = config.conv_shapes()?;
        for (layer, (spec, input)) in p.conv.iter_mut().zip(config.conv.iter().zip(&shapes)) {
            let fan_in = (input.c * spec.kernel * spec.kernel) as f64;
            fill_normal(&mut layer.weights, (2.0 / fan_in).sqrt(), rng);
        }
        let mut fan_in = shapes.last().expect("five conv shapes").len();
        for (layer, &width) in p.fc.iter_mut().zip(&config.fc) {
            fill_normal(&mut layer.weights, (2.0 / fan_in as f64).sqrt(), rng);
            fan_in = width;
        }
        Ok(p)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Layers in declaration order: conv1..conv5 then fc1..fc3.
    pub fn layers(&self) -> impl Iterator<Item = &LayerParams<T>> {
        self.conv.iter().chain(&self.fc)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut LayerParams<T>> {
        self.conv.iter_mut().chain(self.fc.iter_mut())
    }

    /// Parameter tensors in declaration order (weights, then bias, per layer).
    pub fn tensors(&self) -> impl Iterator<Item = &[T]> {
        self.layers().flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        self.layers_mut().flat_map(|l| [&mut l.weights, &mut l.bias])
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().map(<[T]>::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn signature(&self) -> Vec<usize> {
        self.tensors().map(<[T]>::len).collect()
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(T::zero());
        }
    }

    /// Same config, all-zero values.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    pub(crate) fn from_parts(config: NetworkConfig, values: &mut impl Iterator<Item = T>) -> Result<Self> {
        let mut p = Self::zeros(&config)?;
        for t in p.tensors_mut() {
            for slot in t.iter_mut() {
                *slot = values
                    .next()
                    .ok_or_else(|| Error::Shape("too few parameter values".into()))?;
            }
        }
        Ok(p)
    }
}

fn fill_normal<T: Real, R: Rng + ?Sized>(buf: &mut [T], std: f64, rng: &mut R) {
    for v in buf {
        let z: f64 = rng.sample(StandardNormal);
        *v = T::lit(z * std);
    }
}

/// Activations kept by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    signature: Vec<usize>,
    /// Input to each conv layer.
    conv_inputs: Vec<Vec<T>>,
    conv_input_shapes: Vec<Shape>,
    /// Post-ReLU conv outputs, before pooling.
    conv_outputs: Vec<Vec<T>>,
    pool_argmax: Vec<Option<Vec<usize>>>,
    /// Inputs to fc1..fc3.
    fc_inputs: Vec<Vec<T>>,
    /// fc1 and fc2 post-ReLU outputs, then the logits.
    fc_outputs: Vec<Vec<T>>,
}

impl<T: Real> ForwardCache<T> {
    pub fn logits(&self) -> &[T] {
        self.fc_outputs.last().expect("three fc outputs")
    }

    /// Post-ReLU output of the first fully connected layer.
    pub fn features(&self) -> &[T] {
        &self.fc_outputs[0]
    }
}

fn check_input<T: Real>(params: &NetworkParams<T>, input: &ProjectionTensor<T>) -> Result<()> {
    let cfg = params.config();
    if input.side() != cfg.input_side || cfg.input_channels != crate::tensor::CHANNELS {
        return Err(Error::Shape(format!(
            "network expects {}x{}x{}, got {}x{}x3",
            cfg.input_side,
            cfg.input_side,
            cfg.input_channels,
            input.side(),
            input.side()
        )));
    }
    Ok(())
}

/// Runs the network and returns the logits with the activations needed for
/// backpropagation.
pub fn forward<T: Real>(params: &NetworkParams<T>, input: &ProjectionTensor<T>) -> Result<(Vec<T>, ForwardCache<T>)> {
    check_input(params, input)?;
    let cfg = params.config();
    let mut cur = input.data().to_vec();
    let mut shape = cfg.input_shape();
    let mut conv_inputs = Vec::with_capacity(cfg.conv.len());
    let mut conv_input_shapes = Vec::with_capacity(cfg.conv.len());
    let mut conv_outputs = Vec::with_capacity(cfg.conv.len());
    let mut pool_argmax = Vec::with_capacity(cfg.conv.len());
    for (l, (spec, layer)) in cfg.conv.iter().zip(&params.conv).enumerate() {
        let mut out = layers::conv2d_forward(&cur, shape, &layer.weights, &layer.bias, spec);
        layers::relu_in_place(&mut out);
        let out_shape = layers::conv_output_shape(shape, spec).expect("validated config");
        conv_inputs.push(std::mem::take(&mut cur));
        conv_input_shapes.push(shape);
        if cfg.pools_after(l) {
            let (pooled, argmax, pooled_shape) = layers::maxpool2_forward(&out, out_shape);
            conv_outputs.push(out);
            pool_argmax.push(Some(argmax));
            cur = pooled;
            shape = pooled_shape;
        } else {
            cur = out.clone();
            conv_outputs.push(out);
            pool_argmax.push(None);
            shape = out_shape;
        }
    }
    let mut fc_inputs = Vec::with_capacity(params.fc.len());
    let mut fc_outputs = Vec::with_capacity(params.fc.len());
    let last = params.fc.len() - 1;
    for (l, layer) in params.fc.iter().enumerate() {
        let mut out = layers::dense_forward(&cur, &layer.weights, &layer.bias);
        if l < last {
            layers::relu_in_place(&mut out);
        }
        fc_inputs.push(std::mem::replace(&mut cur, out.clone()));
        fc_outputs.push(out);
    }
    if cur.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("logits", "non-finite network output"));
    }
    Ok((
        cur,
        ForwardCache {
            signature: params.signature(),
            conv_inputs,
            conv_input_shapes,
            conv_outputs,
            pool_argmax,
            fc_inputs,
            fc_outputs,
        },
    ))
}

/// Accumulates the gradients for one example into `grads`.
pub(crate) fn backward_into<T: Real>(
    params: &NetworkParams<T>,
    cache: &ForwardCache<T>,
    dlogits: &[T],
    grads: &mut NetworkParams<T>,
) -> Result<()> {
    if cache.signature != params.signature() || grads.signature() != params.signature() {
        return Err(Error::Shape("forward cache does not match these parameters".into()));
    }
    if dlogits.len() != cache.logits().len() {
        return Err(Error::Shape(format!(
            "{} logit gradients for {} logits",
            dlogits.len(),
            cache.logits().len()
        )));
    }
    let cfg = params.config();
    let mut grad = dlogits.to_vec();
    for l in (0..params.fc.len()).rev() {
        if l + 1 < params.fc.len() {
            layers::relu_backward_in_place(&cache.fc_outputs[l], &mut grad);
        }
        let g = &mut grads.fc[l];
        grad = layers::dense_backward(
            &cache.fc_inputs[l],
            &params.fc[l].weights,
            &grad,
            &mut g.weights,
            &mut g.bias,
        );
    }
    for l in (0..params.conv.len()).rev() {
        let out = &cache.conv_outputs[l];
        if let Some(argmax) = &cache.pool_argmax[l] {
            grad = layers::maxpool2_backward(argmax, &grad, out.len());
        }
        layers::relu_backward_in_place(out, &mut grad);
        let input = &cache.conv_inputs[l];
        let g = &mut grads.conv[l];
        let mut dinput = (l > 0).then(|| vec![T::zero(); input.len()]);
        layers::conv2d_backward(
            input,
            cache.conv_input_shapes[l],
            &params.conv[l].weights,
            &cfg.conv[l],
            &grad,
            &mut g.weights,
            &mut g.bias,
            dinput.as_deref_mut(),
        );
        if let Some(d) = dinput {
            grad = d;
        }
    }
    Ok(())
}

/// Reverse-mode gradients of the loss with respect to every parameter, given
/// the loss gradient at the logits.
pub fn backward<T: Real>(
    params: &NetworkParams<T>,
    cache: &ForwardCache<T>,
    dlogits: &[T],
) -> Result<NetworkParams<T>> {
    let mut grads = params.zeros_like();
    backward_into(params, cache, dlogits, &mut grads)?;
    Ok(grads)
}

/// Post-ReLU activations of the first fully connected layer.
pub fn extract_features<T: Real>(params: &NetworkParams<T>, input: &ProjectionTensor<T>) -> Result<Vec<T>> {
    let (_, mut cache) = forward(params, input)?;
    Ok(cache.fc_outputs.swap_remove(0))
}
