//! Per-fold stages shared by the experiment driver and the command line:
//! tensor preparation, fold splits, CNN training, design matrices and
//! regressor fitting.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, FeatureSet, Method};
use super::{concat_features, FeatureStats};
use crate::augment::{augment_one, AugmentConfig};
use crate::baselines::{predict_linear, select_elastic_net, select_lasso, select_svr};
use crate::cnn::{extract_features, split_validation_groups, train_split, NetworkParams, SampleSource, TrainOutcome};
use crate::dataset::{
    attribute_vector, balance_indices, consensus_label, load_manifest, resolve_volume_path, stratified_folds, Class,
    ExclusionCounts, LabeledSample,
};
use crate::error::{Error, Result};
use crate::gpr::{select_hyperparameters, GpModel};
use crate::linalg::Matrix;
use crate::seed;
use crate::tensor::ProjectionTensor;
use crate::volume::{compose_tensor, load_volume, map_index, resample_isotropic, Volume};

/// Labeled nodules and their projection tensors, in manifest order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: PathBuf,
    pub samples: Vec<LabeledSample>,
    pub excluded: ExclusionCounts,
    pub tensors: Vec<ProjectionTensor<f64>>,
}

impl Dataset {
    pub fn classes(&self) -> Vec<Class> {
        self.samples.iter().map(|s| s.class).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.class.index()).collect()
    }
}

/// Window, resample to isotropic spacing, cut the patch around `center`
/// (original voxel indices) and project.
pub fn prepare_tensor(vol: &Volume<f64>, center: [usize; 3], cfg: &ExperimentConfig) -> Result<ProjectionTensor<f64>> {
    if !vol.contains(center) {
        return Err(Error::invalid(
            "center",
            format!("{center:?} outside volume of dims {:?}", vol.dims()),
        ));
    }
    let windowed = vol.window(cfg.window_lo, cfg.window_hi)?;
    let iso = resample_isotropic(&windowed, cfg.spacing_mm)?;
    let c = map_index(center, vol.spacing(), cfg.spacing_mm, iso.dims());
    compose_tensor(&iso.extract_patch(c, cfg.patch_side)?)
}

/// Loads the manifest, applies consensus labeling and prepares one tensor per
/// surviving nodule.
pub fn prepare_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let records = load_manifest(&cfg.manifest)?;
    let (samples, excluded) = consensus_label(&records);
    let mut tensors = Vec::with_capacity(samples.len());
    for s in &samples {
        let path = resolve_volume_path(&cfg.manifest, &s.record);
        let vol: Volume<f64> = load_volume(&path)?;
        let t = prepare_tensor(&vol, s.record.center, cfg)
            .map_err(|e| Error::invalid("nodule", format!("{}: {e}", s.id())))?;
        tensors.push(t);
    }
    Ok(Dataset {
        manifest: cfg.manifest.clone(),
        samples,
        excluded,
        tensors,
    })
}

pub fn fold_seed(master: u64, fold: usize) -> u64 {
    seed::derive(master, seed::TAG_FOLD_BASE + fold as u64)
}

/// Nodule indices of one fold's roles, each sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold: usize,
    pub seed: u64,
    pub test: Vec<usize>,
    /// Held-out training nodules for early diagnostics and hyperparameters.
    pub validation: Vec<usize>,
    /// Training nodules minus validation.
    pub fit: Vec<usize>,
    /// Class-balanced subset of `fit` used to train the CNN.
    pub cnn_train: Vec<usize>,
}

pub fn fold_splits(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Vec<FoldSplit>> {
    let classes = ds.classes();
    let folds = stratified_folds(&classes, cfg.folds, cfg.seed)?;
    let mut out = Vec::with_capacity(folds.len());
    for (f, test) in folds.iter().enumerate() {
        let fs = fold_seed(cfg.seed, f);
        let held: BTreeSet<usize> = test.iter().copied().collect();
        let train: Vec<usize> = (0..classes.len()).filter(|i| !held.contains(i)).collect();
        let by_class: Vec<Vec<usize>> = [Class::Benign, Class::Malignant]
            .iter()
            .map(|&c| train.iter().copied().filter(|&i| classes[i] == c).collect())
            .collect();
        let validation = split_validation_groups(&by_class, cfg.validation_fraction, fs);
        let val_set: BTreeSet<usize> = validation.iter().copied().collect();
        let fit: Vec<usize> = train.iter().copied().filter(|i| !val_set.contains(i)).collect();
        let cnn_train = balance_indices(&fit, &classes, fs).map_err(|e| Error::Fold {
            fold: f,
            source: Box::new(e),
        })?;
        out.push(FoldSplit {
            fold: f,
            seed: fs,
            test: test.clone(),
            validation,
            fit,
            cnn_train,
        });
    }
    Ok(out)
}

/// Original tensors plus lazily generated augmentations of a set of nodules.
///
/// Entry order is nodule by nodule: the original first, then augmented copies
/// `0..count`. Every tensor read is logged by nodule index.
pub struct AugmentedSource<'a> {
    ds: &'a Dataset,
    labels: Vec<usize>,
    entries: Vec<(usize, Option<usize>)>,
    augment: AugmentConfig,
    master_seed: u64,
    reads: RefCell<BTreeSet<usize>>,
}

impl<'a> AugmentedSource<'a> {
    pub fn new(ds: &'a Dataset, cfg: &ExperimentConfig) -> Self {
        Self {
            ds,
            labels: ds.labels(),
            entries: Vec::new(),
            augment: cfg.augment.clone(),
            master_seed: cfg.seed,
            reads: RefCell::new(BTreeSet::new()),
        }
    }

    /// Appends nodules, with their augmented copies when `augmented`.
    pub fn push_nodules(&mut self, nodules: &[usize], augmented: bool) {
        for &n in nodules {
            self.entries.push((n, None));
            if augmented {
                self.entries.extend((0..self.augment.count).map(|k| (n, Some(k))));
            }
        }
    }

    pub fn entry(&self, i: usize) -> (usize, Option<usize>) {
        self.entries[i]
    }

    pub fn entry_id(&self, i: usize) -> String {
        let (n, k) = self.entries[i];
        let id = self.ds.samples[n].id();
        match k {
            None => id.to_string(),
            Some(k) => format!("{id}#{k}"),
        }
    }

    pub fn reads(&self) -> BTreeSet<usize> {
        self.reads.borrow().clone()
    }

    /// Augmentation settings for nodule `n`; the generator is derived from the
    /// master seed and the nodule index, so copies match across folds.
    pub fn augment_config(&self, n: usize) -> AugmentConfig {
        AugmentConfig {
            seed: seed::derive(seed::derive(self.master_seed, seed::TAG_AUGMENT), n as u64),
            ..self.augment.clone()
        }
    }
}

impl SampleSource<f64> for AugmentedSource<'_> {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn label(&self, i: usize) -> usize {
        self.labels[self.entries[i].0]
    }

    fn group(&self, i: usize) -> usize {
        self.entries[i].0
    }

    fn tensor(&self, i: usize) -> ProjectionTensor<f64> {
        let (n, k) = self.entries[i];
        self.reads.borrow_mut().insert(n);
        let base = &self.ds.tensors[n];
        match k {
            None => base.clone(),
            Some(k) => augment_one(base, &self.augment_config(n), k).0,
        }
    }
}

/// Trains the fold's CNN on the balanced training nodules and their
/// augmentations, validating on the held-out originals. Also returns the
/// nodules whose tensors were read.
pub fn train_fold_cnn(
    ds: &Dataset,
    split: &FoldSplit,
    cfg: &ExperimentConfig,
) -> Result<(TrainOutcome<f64>, BTreeSet<usize>)> {
    let mut src = AugmentedSource::new(ds, cfg);
    src.push_nodules(&split.cnn_train, true);
    let n_train = src.len();
    src.push_nodules(&split.validation, false);
    let train_idx: Vec<usize> = (0..n_train).collect();
    let val_idx: Vec<usize> = (n_train..src.len()).collect();
    let tcfg = cfg.train_config(seed::derive(split.seed, seed::TAG_TRAIN));
    let out = train_split(&src, &train_idx, &val_idx, &cfg.network(), &tcfg)?;
    Ok((out, src.reads()))
}

/// Regression inputs for one fold and feature set, already z-scored with the
/// training rows' statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub train_ids: Vec<String>,
    pub x_train: Matrix<f64>,
    pub y_train: Vec<f64>,
    pub val_ids: Vec<String>,
    pub x_val: Matrix<f64>,
    pub y_val: Vec<f64>,
    pub test_ids: Vec<String>,
    pub x_test: Matrix<f64>,
    pub y_test: Vec<f64>,
    /// Nodules behind the training rows (which also fixed the statistics).
    /// Empty when read back from CSV.
    pub train_nodules: BTreeSet<usize>,
}

struct RawRows {
    ids: Vec<String>,
    nodules: Vec<usize>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

fn raw_rows(
    ds: &Dataset,
    src: &AugmentedSource<'_>,
    rows: &[usize],
    params: Option<&NetworkParams<f64>>,
    set: FeatureSet,
) -> Result<RawRows> {
    let mut out = RawRows {
        ids: Vec::with_capacity(rows.len()),
        nodules: Vec::with_capacity(rows.len()),
        x: Vec::with_capacity(rows.len()),
        y: Vec::with_capacity(rows.len()),
    };
    for &i in rows {
        let (n, _) = src.entry(i);
        let sample = &ds.samples[n];
        let cnn = match (set.uses_cnn(), params) {
            (true, Some(p)) => Some(extract_features(p, &src.tensor(i))?),
            (true, None) => return Err(Error::invalid("features", "CNN feature set needs a trained network")),
            (false, _) => None,
        };
        let attrs = if set.uses_attributes() {
            Some(attribute_vector(&sample.record)?)
        } else {
            None
        };
        out.x.push(concat_features(cnn.as_deref(), attrs.as_ref())?);
        out.ids.push(src.entry_id(i));
        out.nodules.push(n);
        out.y.push(sample.consensus_score);
    }
    Ok(out)
}

fn standardized(rows: &[Vec<f64>], stats: &FeatureStats<f64>) -> Result<Matrix<f64>> {
    let z = rows.iter().map(|r| stats.apply(r)).collect::<Result<Vec<_>>>()?;
    if z.is_empty() {
        return Ok(Matrix::zeros(0, stats.dim()));
    }
    Matrix::from_rows(&z)
}

/// Builds the design for each requested feature set.
///
/// CNN-based sets train on a seeded subsample of at most `cfg.subsample` rows
/// drawn from the fit nodules' originals and augmentations; the attribute set
/// uses the fit nodules' originals, since augmentation leaves attributes
/// unchanged. Validation and test rows are always originals.
pub fn fold_designs(
    ds: &Dataset,
    split: &FoldSplit,
    params: Option<&NetworkParams<f64>>,
    sets: &[FeatureSet],
    cfg: &ExperimentConfig,
) -> Result<Vec<Design>> {
    let mut pool = AugmentedSource::new(ds, cfg);
    pool.push_nodules(&split.fit, true);
    let mut rng = seed::rng_for(split.seed, seed::TAG_SUBSAMPLE);
    let picked = rand::seq::index::sample(&mut rng, pool.len(), pool.len().min(cfg.subsample)).into_vec();
    let mut originals = AugmentedSource::new(ds, cfg);
    originals.push_nodules(&split.fit, false);
    let n_fit = originals.len();
    originals.push_nodules(&split.validation, false);
    let n_val = originals.len() - n_fit;
    originals.push_nodules(&split.test, false);

    let fit_rows: Vec<usize> = (0..n_fit).collect();
    let val_rows: Vec<usize> = (n_fit..n_fit + n_val).collect();
    let test_rows: Vec<usize> = (n_fit + n_val..originals.len()).collect();
    let mut out = Vec::with_capacity(sets.len());
    for &set in sets {
        let train = if set.uses_cnn() {
            raw_rows(ds, &pool, &picked, params, set)?
        } else {
            raw_rows(ds, &originals, &fit_rows, params, set)?
        };
        let val = raw_rows(ds, &originals, &val_rows, params, set)?;
        let test = raw_rows(ds, &originals, &test_rows, params, set)?;
        let stats = FeatureStats::fit(&train.x)?;
        out.push(Design {
            x_train: standardized(&train.x, &stats)?,
            x_val: standardized(&val.x, &stats)?,
            x_test: standardized(&test.x, &stats)?,
            train_nodules: train.nodules.iter().copied().collect(),
            train_ids: train.ids,
            y_train: train.y,
            val_ids: val.ids,
            y_val: val.y,
            test_ids: test.ids,
            y_test: test.y,
        });
    }
    Ok(out)
}

pub fn fold_design(
    ds: &Dataset,
    split: &FoldSplit,
    params: Option<&NetworkParams<f64>>,
    set: FeatureSet,
    cfg: &ExperimentConfig,
) -> Result<Design> {
    Ok(fold_designs(ds, split, params, &[set], cfg)?.remove(0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub predictions: Vec<f64>,
    /// Posterior variances (GP only).
    pub variances: Option<Vec<f64>>,
    /// False when a baseline solver stopped at its iteration cap.
    pub converged: bool,
}

/// Selects hyperparameters, fits `method` on the design's training rows and
/// predicts its test rows.
///
/// The GP picks its kernel by marginal likelihood on the first
/// `cfg.gp_select_rows` training rows; the baselines pick theirs by
/// validation error, then refit on the training rows.
pub fn fit_predict(method: Method, design: &Design, cfg: &ExperimentConfig) -> Result<FitResult> {
    let (x, y) = (&design.x_train, &design.y_train);
    if x.rows() == 0 || design.x_test.rows() == 0 {
        return Err(Error::invalid("design", "empty training or test rows"));
    }
    let model = match method {
        Method::Gp => {
            let m = x.rows().min(cfg.gp_select_rows);
            let head: Vec<usize> = (0..m).collect();
            let (kernel, _) = select_hyperparameters(&x.select_rows(&head), &y[..m], cfg.seed)?;
            let gp = GpModel::fit(x.clone(), y.clone(), kernel)?;
            let pred = gp.predict(&design.x_test)?;
            return Ok(FitResult {
                predictions: pred.mean,
                variances: Some(pred.variance),
                converged: true,
            });
        }
        Method::Lasso => {
            let opts = cfg.cd_options();
            select_lasso(x, y, &design.x_val, &design.y_val, opts)?.fit(x, y, opts)?
        }
        Method::ElasticNet => {
            let opts = cfg.cd_options();
            select_elastic_net(x, y, &design.x_val, &design.y_val, opts)?.fit(x, y, opts)?
        }
        Method::Svr => {
            let opts = cfg.svr_options();
            select_svr(x, y, &design.x_val, &design.y_val, opts)?.fit(x, y, opts)?
        }
    };
    Ok(FitResult {
        predictions: predict_linear(&model, &design.x_test)?,
        variances: None,
        converged: model.converged,
    })
}

fn write_rows(out: &mut String, ids: &[String], x: &Matrix<f64>, y: &[f64], validation: bool) {
    for (i, id) in ids.iter().enumerate() {
        write!(out, "{id},{},{}", y[i], u8::from(validation)).expect("write to string");
        for v in x.row(i) {
            write!(out, ",{v}").expect("write to string");
        }
        out.push('\n');
    }
}

fn header(d: usize) -> String {
    let mut h = String::from("id,target,is_validation");
    for j in 0..d {
        write!(h, ",f{j}").expect("write to string");
    }
    h.push('\n');
    h
}

/// Writes training plus validation rows to `train_path` and test rows to
/// `test_path` as `id,target,is_validation,f0,...`.
pub fn write_design_csv(design: &Design, train_path: &Path, test_path: &Path) -> Result<()> {
    let d = design.x_train.cols();
    let mut s = header(d);
    write_rows(&mut s, &design.train_ids, &design.x_train, &design.y_train, false);
    write_rows(&mut s, &design.val_ids, &design.x_val, &design.y_val, true);
    std::fs::write(train_path, s).map_err(|e| Error::io(train_path, e))?;
    let mut s = header(d);
    write_rows(&mut s, &design.test_ids, &design.x_test, &design.y_test, false);
    std::fs::write(test_path, s).map_err(|e| Error::io(test_path, e))
}

struct CsvRows {
    ids: Vec<String>,
    y: Vec<f64>,
    validation: Vec<bool>,
    x: Vec<Vec<f64>>,
}

fn read_feature_csv(path: &Path) -> Result<CsvRows> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid("features", format!("{other:?}")),
    })?;
    let hdr = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if hdr.len() < 4 || &hdr[0] != "id" || &hdr[1] != "target" || &hdr[2] != "is_validation" {
        return Err(Error::Parse {
            line: 1,
            reason: "expected header id,target,is_validation,f0,...".into(),
        });
    }
    let mut out = CsvRows {
        ids: Vec::new(),
        y: Vec::new(),
        validation: Vec::new(),
        x: Vec::new(),
    };
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    reason: format!("bad number {s:?}"),
                })
        };
        out.ids.push(row[0].to_string());
        out.y.push(num(&row[1])?);
        out.validation.push(match row[2].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    line,
                    reason: format!("is_validation must be 0 or 1, got {other:?}"),
                })
            }
        });
        out.x.push(row.iter().skip(3).map(num).collect::<Result<_>>()?);
    }
    Ok(out)
}

fn to_matrix(rows: Vec<Vec<f64>>, d: usize) -> Result<Matrix<f64>> {
    if rows.is_empty() {
        Ok(Matrix::zeros(0, d))
    } else {
        Matrix::from_rows(&rows)
    }
}

pub fn read_design_csv(train_path: &Path, test_path: &Path) -> Result<Design> {
    let train = read_feature_csv(train_path)?;
    let test = read_feature_csv(test_path)?;
    let d = train.x.first().map_or(0, Vec::len);
    if test.x.iter().any(|r| r.len() != d) {
        return Err(Error::Shape(
            "test features differ in width from training features".into(),
        ));
    }
    let mut parts = [
        (Vec::new(), Vec::new(), Vec::new()),
        (Vec::new(), Vec::new(), Vec::new()),
    ];
    for (((id, y), v), x) in train.ids.into_iter().zip(train.y).zip(train.validation).zip(train.x) {
        let p = &mut parts[usize::from(v)];
        p.0.push(id);
        p.1.push(y);
        p.2.push(x);
    }
    let [(train_ids, y_train, xt), (val_ids, y_val, xv)] = parts;
    Ok(Design {
        train_ids,
        x_train: to_matrix(xt, d)?,
        y_train,
        val_ids,
        x_val: to_matrix(xv, d)?,
        y_val,
        test_ids: test.ids,
        x_test: to_matrix(test.x, d)?,
        y_test: test.y,
        train_nodules: BTreeSet::new(),
    })
}

/// `id,target,mean,variance` (variance blank for linear models).
pub fn write_predictions_csv(path: &Path, ids: &[String], targets: &[f64], fit: &FitResult) -> Result<()> {
    let mut s = String::from("id,target,mean,variance\n");
    for (i, id) in ids.iter().enumerate() {
        write!(s, "{id},{},{},", targets[i], fit.predictions[i]).expect("write to string");
        if let Some(v) = &fit.variances {
            write!(s, "{}", v[i]).expect("write to string");
        }
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads `(ids, targets, predictions)` back from a predictions file.
pub fn read_predictions_csv(path: &Path) -> Result<(Vec<String>, Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid("predictions", format!("{other:?}")),
    })?;
    let (mut ids, mut t, mut p) = (Vec::new(), Vec::new(), Vec::new());
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let num = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line,
                reason: format!("bad number {s:?}"),
            })
        };
        ids.push(row[0].to_string());
        t.push(num(&row[1])?);
        p.push(num(&row[2])?);
    }
    Ok((ids, t, p))
}
