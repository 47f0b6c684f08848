use std::collections::BTreeSet;
use std::time::Instant;

use super::config::{ExperimentConfig, FeatureSet, Method};
use super::margin_accuracy;
use super::pipeline::{fit_predict, fold_designs, fold_splits, prepare_dataset, train_fold_cnn, Dataset};
use super::report::{CnnFoldSummary, MethodResult, Report};
use crate::error::{Error, Result};

/// Nodules consulted by each stage of one fold.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FoldTrace {
    pub fold: usize,
    pub test: BTreeSet<usize>,
    pub validation: BTreeSet<usize>,
    pub balance_input: BTreeSet<usize>,
    /// Nodules whose tensors the CNN trainer read (training and validation).
    pub cnn_reads: BTreeSet<usize>,
    /// Nodules behind the rows that fixed standardization statistics and
    /// regressor weights.
    pub regression_train: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPredictions {
    pub fold: usize,
    pub method: Method,
    pub features: FeatureSet,
    pub ids: Vec<String>,
    pub targets: Vec<f64>,
    pub predictions: Vec<f64>,
    pub variances: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: Report,
    pub predictions: Vec<FoldPredictions>,
    pub traces: Vec<FoldTrace>,
}

fn in_fold<T>(fold: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Fold { .. } => e,
        e => Error::Fold {
            fold,
            source: Box::new(e),
        },
    })
}

/// Full cross-validated run. `log` receives one progress line per stage.
pub fn run_experiment(cfg: &ExperimentConfig, log: &mut dyn FnMut(&str)) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let ds = prepare_dataset(cfg)?;
    log(&format!(
        "{} labeled nodules ({} too few raters, {} neutral)",
        ds.samples.len(),
        ds.excluded.too_few_raters,
        ds.excluded.neutral_score
    ));
    run_on_dataset(&ds, cfg, log).map(|mut out| {
        out.report.elapsed_seconds = start.elapsed().as_secs_f64();
        out
    })
}

fn run_on_dataset(ds: &Dataset, cfg: &ExperimentConfig, log: &mut dyn FnMut(&str)) -> Result<ExperimentOutput> {
    let splits = fold_splits(ds, cfg)?;
    let combos: Vec<(Method, FeatureSet)> = cfg
        .feature_sets
        .iter()
        .flat_map(|&f| cfg.methods.iter().map(move |&m| (m, f)))
        .collect();
    let mut accuracies = vec![Vec::with_capacity(splits.len()); combos.len()];
    let mut unconverged = vec![0usize; combos.len()];
    let mut predictions = Vec::new();
    let mut traces = Vec::new();
    let mut cnn = Vec::new();
    let needs_cnn = cfg.feature_sets.iter().any(|f| f.uses_cnn());

    for split in &splits {
        let f = split.fold;
        let mut trace = FoldTrace {
            fold: f,
            test: split.test.iter().copied().collect(),
            validation: split.validation.iter().copied().collect(),
            balance_input: split.fit.iter().copied().collect(),
            ..Default::default()
        };
        let params = if needs_cnn {
            let (outcome, reads) = in_fold(f, train_fold_cnn(ds, split, cfg))?;
            trace.cnn_reads = reads;
            let summary = CnnFoldSummary {
                fold: f,
                training_nodules: split.cnn_train.len(),
                final_loss: outcome.loss_curve.last().copied().unwrap_or(f64::NAN),
                validation_loss: outcome.validation.as_ref().map(|v| v.loss),
                validation_accuracy: outcome.validation.as_ref().map(|v| v.accuracy),
            };
            log(&format!(
                "fold {f}: cnn trained on {} nodules, final loss {:.4}, validation accuracy {}",
                summary.training_nodules,
                summary.final_loss,
                summary.validation_accuracy.map_or("n/a".into(), |a| format!("{a:.3}"))
            ));
            cnn.push(summary);
            Some(outcome.params)
        } else {
            None
        };
        let designs = in_fold(f, fold_designs(ds, split, params.as_ref(), &cfg.feature_sets, cfg))?;
        for d in &designs {
            trace.regression_train.extend(&d.train_nodules);
        }
        for (c, &(method, set)) in combos.iter().enumerate() {
            let k = cfg.feature_sets.iter().position(|&s| s == set).expect("set listed");
            let design = &designs[k];
            let fit = in_fold(f, fit_predict(method, design, cfg))?;
            let acc = in_fold(f, margin_accuracy(&fit.predictions, &design.y_test, cfg.margin))?;
            log(&format!("fold {f}: {method}/{set} accuracy {acc:.4}"));
            accuracies[c].push(acc);
            unconverged[c] += usize::from(!fit.converged);
            predictions.push(FoldPredictions {
                fold: f,
                method,
                features: set,
                ids: design.test_ids.clone(),
                targets: design.y_test.clone(),
                predictions: fit.predictions,
                variances: fit.variances,
            });
        }
        traces.push(trace);
    }

    let results = combos
        .iter()
        .zip(accuracies)
        .zip(unconverged)
        .map(|((&(m, f), acc), u)| MethodResult::new(m, f, acc, u))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutput {
        report: Report {
            seed: cfg.seed,
            config: cfg.clone(),
            nodules: ds.samples.len(),
            excluded: ds.excluded,
            folds: splits.len(),
            results,
            cnn,
            elapsed_seconds: 0.0,
        },
        predictions,
        traces,
    })
}
