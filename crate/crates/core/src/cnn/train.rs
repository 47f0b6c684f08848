use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{NetworkConfig, CLASSES};
use super::layers::softmax_cross_entropy;
use super::network::{backward_into, forward, NetworkParams};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed;
use crate::tensor::ProjectionTensor;

const TAG_INIT: u64 = 11;
const TAG_SPLIT: u64 = 12;
const TAG_BATCH: u64 = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Fraction of sample groups held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            validation_fraction: 0.10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::invalid("train", "iterations and batch size must be positive"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", "must lie in [0, 1)"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Labeled training data. Samples sharing a `group` (a nodule and its
/// augmented copies) always land on the same side of the validation split.
pub trait SampleSource<T> {
    fn len(&self) -> usize;
    fn label(&self, i: usize) -> usize;
    fn group(&self, i: usize) -> usize;
    fn tensor(&self, i: usize) -> ProjectionTensor<T>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTensor<T> {
    pub tensor: ProjectionTensor<T>,
    pub label: usize,
    pub group: usize,
}

impl<T: Real> SampleSource<T> for [LabeledTensor<T>] {
    fn len(&self) -> usize {
        <[LabeledTensor<T>]>::len(self)
    }

    fn label(&self, i: usize) -> usize {
        self[i].label
    }

    fn group(&self, i: usize) -> usize {
        self[i].group
    }

    fn tensor(&self, i: usize) -> ProjectionTensor<T> {
        self[i].tensor.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub samples: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: NetworkParams<T>,
    /// Mean minibatch loss per iteration.
    pub loss_curve: Vec<f64>,
    pub validation_groups: Vec<usize>,
    pub validation: Option<ValidationSummary>,
}

/// Stratified group split: from each class, `round(fraction * groups)` groups
/// (keeping at least one per class for training) go to validation.
pub fn split_validation_groups(groups_by_class: &[Vec<usize>], fraction: f64, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng_for(seed, TAG_SPLIT);
    let mut val = Vec::new();
    for groups in groups_by_class {
        let mut g = groups.clone();
        g.sort_unstable();
        g.dedup();
        g.shuffle(&mut rng);
        let take = ((fraction * g.len() as f64).round() as usize).min(g.len().saturating_sub(1));
        val.extend_from_slice(&g[..take]);
    }
    val.sort_unstable();
    val
}

/// Minibatch SGD with momentum on softmax cross-entropy.
pub fn train<T: Real, S: SampleSource<T> + ?Sized>(
    data: &S,
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    net_cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training data", "no samples"));
    }
    let mut per_class = [0usize; CLASSES];
    let mut groups_by_class = vec![Vec::new(); CLASSES];
    for i in 0..data.len() {
        let label = data.label(i);
        if label >= CLASSES {
            return Err(Error::invalid("label", format!("{label} is not a class index")));
        }
        per_class[label] += 1;
        groups_by_class[label].push(data.group(i));
    }
    if per_class.iter().any(|&c| c < 2) {
        return Err(Error::invalid(
            "training data",
            format!("need at least two samples per class, have {per_class:?}"),
        ));
    }

    let validation_groups = split_validation_groups(&groups_by_class, cfg.validation_fraction, cfg.seed);
    let held_out: BTreeSet<usize> = validation_groups.iter().copied().collect();
    let (train_idx, val_idx): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| !held_out.contains(&data.group(i)));
    train_split(data, &train_idx, &val_idx, net_cfg, cfg)
}

/// Trains on the samples listed in `train_idx` and reports loss and accuracy
/// on `val_idx`. `cfg.validation_fraction` is ignored.
pub fn train_split<T: Real, S: SampleSource<T> + ?Sized>(
    data: &S,
    train_idx: &[usize],
    val_idx: &[usize],
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    net_cfg.validate()?;
    if train_idx.is_empty() {
        return Err(Error::invalid("training data", "no training samples"));
    }
    if let Some(&bad) = train_idx.iter().chain(val_idx).find(|&&i| i >= data.len()) {
        return Err(Error::invalid(
            "training data",
            format!("sample index {bad} out of range"),
        ));
    }
    let validation_groups: Vec<usize> = val_idx
        .iter()
        .map(|&i| data.group(i))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut params = NetworkParams::he_init(net_cfg, &mut seed::rng_for(cfg.seed, TAG_INIT))?;
    let mut velocity = params.zeros_like();
    let mut grads = params.zeros_like();
    let mut order = train_idx.to_vec();
    let mut cursor = order.len();
    let mut rng = seed::rng_for(cfg.seed, TAG_BATCH);
    let lr = T::lit(cfg.learning_rate);
    let mu = T::lit(cfg.momentum);
    let batch = cfg.batch_size.min(train_idx.len());
    let scale = T::one() / T::from_usize_lossy(batch);
    let mut loss_curve = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        grads.fill_zero();
        let mut batch_loss = 0.0;
        for _ in 0..batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let i = order[cursor];
            cursor += 1;
            let (logits, cache) = forward(&params, &data.tensor(i))?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, data.label(i))?;
            batch_loss += loss.as_f64();
            backward_into(&params, &cache, &dlogits, &mut grads)?;
        }
        let batch_loss = batch_loss / batch as f64;
        if !batch_loss.is_finite() {
            return Err(Error::NonConvergence {
                solver: "sgd (loss diverged)",
                iterations: it + 1,
            });
        }
        loss_curve.push(batch_loss);
        for ((p, v), g) in params.tensors_mut().zip(velocity.tensors_mut()).zip(grads.tensors()) {
            for ((p, v), &g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                *v = mu * *v - lr * g * scale;
                *p += *v;
            }
        }
    }

    let validation = if val_idx.is_empty() {
        None
    } else {
        let mut loss = 0.0;
        let mut correct = 0usize;
        for &i in val_idx {
            let (logits, _) = forward(&params, &data.tensor(i))?;
            loss += softmax_cross_entropy(&logits, data.label(i))?.0.as_f64();
            let pred = usize::from(logits[1] > logits[0]);
            correct += usize::from(pred == data.label(i));
        }
        Some(ValidationSummary {
            samples: val_idx.len(),
            loss: loss / val_idx.len() as f64,
            accuracy: correct as f64 / val_idx.len() as f64,
        })
    };

    Ok(TrainOutcome {
        params,
        loss_curve,
        validation_groups,
        validation,
    })
}

/// Loss curve as `iteration,loss` CSV.
pub fn write_loss_csv(curve: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::from("iteration,loss\n");
    for (i, l) in curve.iter().enumerate() {
        writeln!(s, "{i},{l}").expect("write to string");
    }
    let path = path.as_ref();
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
