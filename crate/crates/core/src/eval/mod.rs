//! Scoring, feature fusion and the cross-validated experiment driver.

mod config;
mod experiment;
mod pipeline;
mod report;

pub use config::{ExperimentConfig, FeatureSet, Method};
pub use experiment::{run_experiment, ExperimentOutput, FoldPredictions, FoldTrace};
pub use pipeline::{
    fit_predict, fold_design, fold_designs, fold_seed, fold_splits, prepare_dataset, prepare_tensor, read_design_csv,
    read_predictions_csv, train_fold_cnn, write_design_csv, write_predictions_csv, AugmentedSource, Dataset, Design,
    FitResult, FoldSplit,
};
pub use report::{load_report, render_table, CnnFoldSummary, MethodResult, Report};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_MARGIN: f64 = 1.0;

/// Fraction of predictions within `margin` of their label, boundary included.
pub fn margin_accuracy<T: Real>(preds: &[T], labels: &[T], margin: T) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::invalid("predictions", "empty input"));
    }
    let hits = preds
        .iter()
        .zip(labels)
        .filter(|(&p, &l)| (p - l).abs() <= margin)
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard error of the mean with the `k - 1` sample standard deviation.
pub fn sem(values: &[f64]) -> Result<f64> {
    let k = values.len();
    if k < 2 {
        return Err(Error::invalid("sem", "need at least two values"));
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (k - 1) as f64;
    Ok((var / k as f64).sqrt())
}

/// Per-dimension training statistics for z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats<T> {
    pub mean: Vec<T>,
    /// Population standard deviation; zero marks a constant dimension.
    pub std: Vec<T>,
}

impl<T: Real> FeatureStats<T> {
    pub fn fit<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::invalid("stats", "no training rows"))?;
        let d = first.as_ref().len();
        let n = T::from_usize_lossy(rows.len());
        let mut mean = vec![T::zero(); d];
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::Shape(format!("row of {} features, expected {d}", r.len())));
            }
            for (m, &v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut std = vec![T::zero(); d];
        for r in rows {
            for ((s, &v), &m) in std.iter_mut().zip(r.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt();
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "{} features, stats cover {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((&v, &m), &s)| if s > T::zero() { (v - m) / s } else { T::zero() })
            .collect())
    }
}

/// Concatenates attributes then CNN features (raw), ready for [`FeatureStats`].
pub fn concat_features<T: Real>(cnn: Option<&[T]>, attributes: Option<&[T; 6]>) -> Result<Vec<T>> {
    if cnn.is_none() && attributes.is_none() {
        return Err(Error::invalid("features", "need CNN features, attributes or both"));
    }
    let mut out = Vec::new();
    if let Some(a) = attributes {
        out.extend_from_slice(a);
    }
    if let Some(c) = cnn {
        out.extend_from_slice(c);
    }
    Ok(out)
}

/// Concatenated and z-scored feature vector using training-split `stats`.
pub fn fuse_features<T: Real>(
    cnn: Option<&[T]>,
    attributes: Option<&[T; 6]>,
    stats: &FeatureStats<T>,
) -> Result<Vec<T>> {
    stats.apply(&concat_features(cnn, attributes)?)
}
