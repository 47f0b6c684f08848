//! Experiment configuration as a flat `key = value` text file.
//!
//! Blank lines and `#` comments are ignored. Every key is optional; missing
//! keys take the defaults of [`ExperimentConfig::default`]. Lists are comma
//! separated.
//!
//! | key | meaning |
//! |-----|---------|
//! | `manifest` | nodule manifest CSV (relative to the config file) |
//! | `seed` | master seed |
//! | `folds` | cross-validation folds |
//! | `spacing_mm` | isotropic resampling target |
//! | `patch_side` | cubic patch side in voxels (odd) |
//! | `window_lo`, `window_hi` | intensity window mapped to [0, 1] |
//! | `augment_count` | augmented copies per training nodule |
//! | `augment_scale_up`, `augment_scale_down` | rescale factors |
//! | `augment_gaussian_mean_range`, `augment_gaussian_sigma` | Gaussian noise |
//! | `augment_sp_fraction`, `augment_speckle_sigma` | salt-and-pepper, speckle |
//! | `conv_channels` | five conv widths |
//! | `fc_widths` | two hidden FC widths (first = feature size) |
//! | `iterations`, `batch_size`, `learning_rate`, `momentum` | SGD |
//! | `validation_fraction` | share of training nodules held out |
//! | `subsample` | regression training rows per fold |
//! | `gp_select_rows` | rows used for GP hyperparameter search |
//! | `methods` | any of `gp, lasso, enet, svr` |
//! | `feature_sets` | any of `cnn, attributes, fused` |
//! | `margin` | accuracy margin |
//! | `cd_tol`, `svr_tol`, `max_iter` | baseline solver limits |

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::baselines::SolverOptions;
use crate::cnn::{NetworkConfig, TrainConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gp,
    Lasso,
    #[serde(rename = "enet")]
    ElasticNet,
    Svr,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Gp, Method::Lasso, Method::ElasticNet, Method::Svr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gp => "gp",
            Method::Lasso => "lasso",
            Method::ElasticNet => "enet",
            Method::Svr => "svr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::invalid("method", format!("unknown method {s:?} (gp, lasso, enet, svr)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    Cnn,
    Attributes,
    Fused,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [FeatureSet::Cnn, FeatureSet::Attributes, FeatureSet::Fused];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Cnn => "cnn",
            FeatureSet::Attributes => "attributes",
            FeatureSet::Fused => "fused",
        }
    }

    pub fn uses_cnn(self) -> bool {
        self != FeatureSet::Attributes
    }

    pub fn uses_attributes(self) -> bool {
        self != FeatureSet::Cnn
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSet::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| {
                Error::invalid(
                    "feature set",
                    format!("unknown feature set {s:?} (cnn, attributes, fused)"),
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    pub seed: u64,
    pub folds: usize,
    pub spacing_mm: f64,
    pub patch_side: usize,
    pub window_lo: f64,
    pub window_hi: f64,
    pub augment: AugmentConfig,
    pub conv_channels: [usize; 5],
    pub fc_widths: [usize; 2],
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub validation_fraction: f64,
    pub subsample: usize,
    pub gp_select_rows: usize,
    pub methods: Vec<Method>,
    pub feature_sets: Vec<FeatureSet>,
    pub margin: f64,
    pub cd_tol: f64,
    pub svr_tol: f64,
    pub max_iter: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            manifest: PathBuf::from("manifest.csv"),
            seed: 0,
            folds: 10,
            spacing_mm: crate::volume::DEFAULT_SPACING_MM,
            patch_side: 41,
            window_lo: -1000.0,
            window_hi: 400.0,
            augment: AugmentConfig::default(),
            conv_channels: [8, 16, 16, 16, 16],
            fc_widths: [64, 32],
            iterations: train.iterations,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            momentum: train.momentum,
            validation_fraction: train.validation_fraction,
            subsample: 2000,
            gp_select_rows: 500,
            methods: Method::ALL.to_vec(),
            feature_sets: FeatureSet::ALL.to_vec(),
            margin: super::DEFAULT_MARGIN,
            cd_tol: 1e-6,
            svr_tol: 1e-3,
            max_iter: 2000,
        }
    }
}

fn parse_list<V: FromStr>(v: &str, key: &'static str) -> Result<Vec<V>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::invalid(key, format!("cannot parse list item {s:?}")))
        })
        .collect()
}

fn parse_array<const N: usize>(v: &str, key: &'static str) -> Result<[usize; N]> {
    let items: Vec<usize> = parse_list(v, key)?;
    items
        .try_into()
        .map_err(|items: Vec<usize>| Error::invalid(key, format!("expected {N} values, got {}", items.len())))
}

fn join<V: fmt::Display>(items: &[V]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn network(&self) -> NetworkConfig {
        NetworkConfig::with_widths(self.patch_side, self.conv_channels, self.fc_widths)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            validation_fraction: self.validation_fraction,
            seed,
        }
    }

    pub fn cd_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.cd_tol,
            max_iter: self.max_iter,
        }
    }

    pub fn svr_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.svr_tol,
            max_iter: self.max_iter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid("folds", "need at least two folds"));
        }
        if !(self.spacing_mm > 0.0 && self.spacing_mm.is_finite()) {
            return Err(Error::invalid("spacing_mm", "must be positive"));
        }
        if self.patch_side < 3 || self.patch_side.is_multiple_of(2) {
            return Err(Error::invalid("patch_side", "must be odd and at least 3"));
        }
        if !(self.window_hi > self.window_lo) {
            return Err(Error::invalid("window_hi", "must exceed window_lo"));
        }
        self.augment.validate()?;
        self.network().validate()?;
        self.train_config(0).validate()?;
        if self.subsample == 0 || self.gp_select_rows == 0 {
            return Err(Error::invalid("subsample", "row counts must be positive"));
        }
        if self.methods.is_empty() || self.feature_sets.is_empty() {
            return Err(Error::invalid("methods", "need at least one method and feature set"));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::invalid("margin", "must be non-negative"));
        }
        if !(self.cd_tol > 0.0 && self.svr_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::invalid("solver", "tolerances and max_iter must be positive"));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<V: FromStr>(v: &str, key: &'static str) -> Result<V> {
            v.trim()
                .parse()
                .map_err(|_| Error::invalid(key, format!("cannot parse {v:?}")))
        }
        let v = value.trim();
        match key.trim() {
            "manifest" => self.manifest = PathBuf::from(v),
            "seed" => self.seed = num(v, "seed")?,
            "folds" => self.folds = num(v, "folds")?,
            "spacing_mm" => self.spacing_mm = num(v, "spacing_mm")?,
            "patch_side" => self.patch_side = num(v, "patch_side")?,
            "window_lo" => self.window_lo = num(v, "window_lo")?,
            "window_hi" => self.window_hi = num(v, "window_hi")?,
            "augment_count" => self.augment.count = num(v, "augment_count")?,
            "augment_scale_up" => self.augment.scale_up = num(v, "augment_scale_up")?,
            "augment_scale_down" => self.augment.scale_down = num(v, "augment_scale_down")?,
            "augment_gaussian_mean_range" => self.augment.gaussian_mean_range = num(v, "augment_gaussian_mean_range")?,
            "augment_gaussian_sigma" => self.augment.gaussian_sigma = num(v, "augment_gaussian_sigma")?,
            "augment_sp_fraction" => self.augment.sp_fraction = num(v, "augment_sp_fraction")?,
            "augment_speckle_sigma" => self.augment.speckle_sigma = num(v, "augment_speckle_sigma")?,
            "conv_channels" => self.conv_channels = parse_array(v, "conv_channels")?,
            "fc_widths" => self.fc_widths = parse_array(v, "fc_widths")?,
            "iterations" => self.iterations = num(v, "iterations")?,
            "batch_size" => self.batch_size = num(v, "batch_size")?,
            "learning_rate" => self.learning_rate = num(v, "learning_rate")?,
            "momentum" => self.momentum = num(v, "momentum")?,
            "validation_fraction" => self.validation_fraction = num(v, "validation_fraction")?,
            "subsample" => self.subsample = num(v, "subsample")?,
            "gp_select_rows" => self.gp_select_rows = num(v, "gp_select_rows")?,
            "methods" => self.methods = parse_list(v, "methods")?,
            "feature_sets" => self.feature_sets = parse_list(v, "feature_sets")?,
            "margin" => self.margin = num(v, "margin")?,
            "cd_tol" => self.cd_tol = num(v, "cd_tol")?,
            "svr_tol" => self.svr_tol = num(v, "svr_tol")?,
            "max_iter" => self.max_iter = num(v, "max_iter")?,
            other => return Err(Error::invalid("config", format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let line_no = i as u64 + 1;
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                reason: format!("expected key = value, got {line:?}"),
            })?;
            cfg.set(k, v).map_err(|e| Error::Parse {
                line: line_no,
                reason: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    /// Reads a config file; a relative `manifest` is resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if cfg.manifest.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.manifest = dir.join(&cfg.manifest);
            }
        }
        Ok(cfg)
    }

    /// Every key in documented order; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let a = &self.augment;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("write to string");
        kv("manifest", self.manifest.display().to_string());
        kv("seed", self.seed.to_string());
        kv("folds", self.folds.to_string());
        kv("spacing_mm", self.spacing_mm.to_string());
        kv("patch_side", self.patch_side.to_string());
        kv("window_lo", self.window_lo.to_string());
        kv("window_hi", self.window_hi.to_string());
        kv("augment_count", a.count.to_string());
        kv("augment_scale_up", a.scale_up.to_string());
        kv("augment_scale_down", a.scale_down.to_string());
        kv("augment_gaussian_mean_range", a.gaussian_mean_range.to_string());
        kv("augment_gaussian_sigma", a.gaussian_sigma.to_string());
        kv("augment_sp_fraction", a.sp_fraction.to_string());
        kv("augment_speckle_sigma", a.speckle_sigma.to_string());
        kv("conv_channels", join(&self.conv_channels));
        kv("fc_widths", join(&self.fc_widths));
        kv("iterations", self.iterations.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("momentum", self.momentum.to_string());
        kv("validation_fraction", self.validation_fraction.to_string());
        kv("subsample", self.subsample.to_string());
        kv("gp_select_rows", self.gp_select_rows.to_string());
        kv("methods", join(&self.methods));
        kv("feature_sets", join(&self.feature_sets));
        kv("margin", self.margin.to_string());
        kv("cd_tol", self.cd_tol.to_string());
        kv("svr_tol", self.svr_tol.to_string());
        kv("max_iter", self.max_iter.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip() {
        let mut cfg = ExperimentConfig {
            seed: 42,
            folds: 5,
            spacing_mm: 1.0,
            methods: vec![Method::Gp, Method::Svr],
            feature_sets: vec![FeatureSet::Fused],
            learning_rate: 0.003,
            ..Default::default()
        };
        cfg.augment.count = 7;
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn partial_file_with_comments() {
        let cfg = ExperimentConfig::parse("# desk run\nfolds = 3\n\nmethods = gp, lasso # two\n").unwrap();
        assert_eq!(cfg.folds, 3);
        assert_eq!(cfg.methods, vec![Method::Gp, Method::Lasso]);
        assert_eq!(cfg.patch_side, 41);
    }

    #[test]
    fn errors_name_the_line() {
        match ExperimentConfig::parse("folds = 3\nbogus = 1\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::parse("methods = gp, rf").is_err());
        assert!(ExperimentConfig::parse("conv_channels = 1,2").is_err());
        assert!(ExperimentConfig::parse("no equals sign").is_err());
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig {
            patch_side: 20,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ExperimentConfig {
            folds: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ExperimentConfig {
            methods: vec![],
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
