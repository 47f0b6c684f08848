use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, FeatureSet, Method};
use crate::dataset::ExclusionCounts;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub features: FeatureSet,
    /// Per-fold accuracy as a fraction, in fold order.
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy_pct: f64,
    pub sem_pct: f64,
    /// Folds whose final fit hit the solver's iteration cap.
    pub unconverged_folds: usize,
}

impl MethodResult {
    pub fn new(
        method: Method,
        features: FeatureSet,
        fold_accuracies: Vec<f64>,
        unconverged_folds: usize,
    ) -> Result<Self> {
        Ok(Self {
            method,
            features,
            mean_accuracy_pct: 100.0 * super::mean(&fold_accuracies),
            sem_pct: 100.0 * super::sem(&fold_accuracies)?,
            fold_accuracies,
            unconverged_folds,
        })
    }

    pub fn mean_accuracy(&self) -> f64 {
        super::mean(&self.fold_accuracies)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnFoldSummary {
    pub fold: usize,
    pub training_nodules: usize,
    pub final_loss: f64,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub nodules: usize,
    pub excluded: ExclusionCounts,
    pub folds: usize,
    pub results: Vec<MethodResult>,
    pub cnn: Vec<CnnFoldSummary>,
    /// Wall-clock duration; kept out of the JSON so reruns compare equal.
    #[serde(skip)]
    pub elapsed_seconds: f64,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line() as u64,
            reason: e.to_string(),
        })
    }

    pub fn result(&self, method: Method, features: FeatureSet) -> Option<&MethodResult> {
        self.results
            .iter()
            .find(|r| r.method == method && r.features == features)
    }
}

pub fn load_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Report::from_json(&text)
}

/// Plain-text table: one row per method and feature set.
pub fn render_table(report: &Report) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{} nodules, {} folds, seed {}",
        report.nodules, report.folds, report.seed
    )
    .expect("write to string");
    writeln!(s, "{:<8} {:<12} {:>10} {:>8}", "method", "features", "acc %", "sem %").expect("write to string");
    for r in &report.results {
        writeln!(
            s,
            "{:<8} {:<12} {:>10.2} {:>8.2}{}",
            r.method.name(),
            r.features.name(),
            r.mean_accuracy_pct,
            r.sem_pct,
            if r.unconverged_folds > 0 { "  (unconverged)" } else { "" }
        )
        .expect("write to string");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        Report {
            seed: 3,
            config: ExperimentConfig::default(),
            nodules: 20,
            excluded: ExclusionCounts::default(),
            folds: 2,
            results: vec![
                MethodResult::new(Method::Gp, FeatureSet::Cnn, vec![0.8, 0.9], 0).unwrap(),
                MethodResult::new(Method::Lasso, FeatureSet::Fused, vec![0.75, 0.7], 1).unwrap(),
            ],
            cnn: vec![],
            elapsed_seconds: 1.5,
        }
    }

    #[test]
    fn json_roundtrip_drops_timing() {
        let r = sample();
        let back = Report::from_json(&r.to_json()).unwrap();
        assert_eq!(back.elapsed_seconds, 0.0);
        assert_eq!(back.results, r.results);
        assert!(!r.to_json().contains("elapsed"));
    }

    #[test]
    fn aggregates_recompute() {
        let r = &sample().results[0];
        assert!((r.mean_accuracy_pct - 85.0).abs() < 1e-12);
        assert!((r.sem_pct - 5.0).abs() < 1e-12);
    }

    #[test]
    fn table_has_row_per_result() {
        let t = render_table(&sample());
        assert_eq!(t.lines().count(), 4);
        assert!(t.contains("gp") && t.contains("85.00") && t.contains("unconverged"));
    }
}
