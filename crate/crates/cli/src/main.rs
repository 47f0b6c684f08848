//! `nodule`: stage-by-stage or end-to-end malignancy scoring.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nodule_core::augment::{augment_set_traced, AugmentConfig};
use nodule_core::cnn::{load_checkpoint, save_checkpoint, write_loss_csv, NetworkParams};
use nodule_core::dataset::{synth_generate, SynthConfig};
use nodule_core::eval::{
    fit_predict, fold_design, fold_splits, load_report, margin_accuracy, prepare_dataset, read_design_csv,
    render_table, run_experiment, train_fold_cnn, write_design_csv, write_predictions_csv, ExperimentConfig,
    FeatureSet, Method,
};
use nodule_core::tensor::{export_png, load_tensor, save_tensor};
use nodule_core::volume::{compose_tensor, load_volume, map_index, resample_isotropic};
use nodule_core::{Error, ErrorClass, Volume64};
use serde_json::json;

#[derive(Parser)]
#[command(name = "nodule", version, about = "Lung nodule malignancy scoring pipeline")]
struct Cli {
    /// Master seed (overrides the config file's `seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config file (flat key = value)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic phantom volumes and a manifest
    Synth {
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Volume side in voxels
        #[arg(long, default_value_t = 41)]
        side: usize,
        /// Std of the latent malignancy noise
        #[arg(long, default_value_t = 0.3)]
        latent_noise: f64,
        /// Std of each simulated rater's noise
        #[arg(long, default_value_t = 0.4)]
        rater_noise: f64,
    },
    /// Project a cubic patch of a volume into a three-channel tensor
    Project {
        /// Input RVOL volume
        #[arg(long = "in")]
        input: PathBuf,
        /// Patch center as x,y,z voxel indices of the input volume
        #[arg(long, value_parser = parse_triple)]
        center: [usize; 3],
        /// Patch side in voxels (odd)
        #[arg(long)]
        side: usize,
        /// Output PTN1 tensor
        #[arg(long)]
        out: PathBuf,
        /// Resample to this isotropic spacing (mm) first
        #[arg(long)]
        spacing: Option<f64>,
        /// Map intensities lo,hi to [0, 1] first
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        window: Option<(f64, f64)>,
        /// Also write <prefix>_c{0,1,2}.png
        #[arg(long)]
        png: Option<PathBuf>,
    },
    /// Write augmented copies of a tensor
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory for aug_NNNN.bin and recipes.csv
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        count: usize,
    },
    /// Train the CNN for one cross-validation fold
    Train {
        #[arg(long)]
        fold: usize,
        /// Output NNC1 checkpoint
        #[arg(long)]
        out: PathBuf,
        /// Optional loss curve CSV
        #[arg(long)]
        loss: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write one fold's regression design matrices
    Features {
        #[arg(long)]
        fold: usize,
        /// CNN checkpoint (not needed for the attribute set)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// cnn, attributes or fused
        #[arg(long, default_value = "cnn")]
        feature_set: FeatureSet,
        /// Training and validation rows
        #[arg(long)]
        out: PathBuf,
        /// Test rows
        #[arg(long)]
        test_out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Fit a regressor on a design and predict its test rows
    Regress {
        /// gp, lasso, enet or svr
        #[arg(long)]
        method: Method,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Predictions CSV
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the full cross-validated experiment
    Evaluate {
        /// Report JSON
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-fold prediction files
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Render a report JSON as a table
    Report { report: PathBuf },
}

#[derive(Args)]
struct Overrides {
    /// Override a config key (repeatable), e.g. --set folds=5
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad index {p:?}")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected x,y,z".to_string())
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("bad number {v:?}"));
    Ok((p(a)?, p(b)?))
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult = Result<serde_json::Value, Failure>;

fn experiment_config(cli: &Cli, overrides: &Overrides) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for kv in &overrides.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_config(cli: &Cli) -> Result<(), Failure> {
    if cli.config.is_none() {
        return Err(Failure::Usage("this subcommand needs --config".into()));
    }
    Ok(())
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Synth {
            count,
            out,
            side,
            latent_noise,
            rater_noise,
        } => {
            let cfg = SynthConfig {
                count: *count,
                side: *side,
                seed: cli.seed.unwrap_or(0),
                latent_noise: *latent_noise,
                rater_noise: *rater_noise,
                ..Default::default()
            };
            let o = synth_generate(&cfg, out)?;
            Ok(json!({"manifest": path_str(&o.manifest), "count": o.records.len()}))
        }
        Command::Project {
            input,
            center,
            side,
            out,
            spacing,
            window,
            png,
        } => {
            let mut vol: Volume64 = load_volume(input)?;
            if !vol.contains(*center) {
                return Err(Error::Invalid {
                    field: "center",
                    reason: format!("{center:?} outside volume of dims {:?}", vol.dims()),
                }
                .into());
            }
            if let Some((lo, hi)) = window {
                vol = vol.window(*lo, *hi)?;
            }
            let mut c = *center;
            if let Some(s) = spacing {
                let iso = resample_isotropic(&vol, *s)?;
                c = map_index(c, vol.spacing(), *s, iso.dims());
                vol = iso;
            }
            let t = compose_tensor(&vol.extract_patch(c, *side)?)?;
            save_tensor(&t, out)?;
            let pngs = match png {
                Some(prefix) => export_png(&t, prefix)?.iter().map(|p| path_str(p)).collect(),
                None => Vec::new(),
            };
            Ok(json!({"tensor": path_str(out), "side": t.side(), "png": pngs}))
        }
        Command::Augment { input, out, count } => {
            let t = load_tensor::<f64>(input)?;
            let cfg = AugmentConfig {
                count: *count,
                seed: cli.seed.unwrap_or(0),
                ..Default::default()
            };
            std::fs::create_dir_all(out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            let mut recipes = String::from("index,angle_deg,scale,noise,gaussian_mean\n");
            for (k, (a, r)) in augment_set_traced(&t, &cfg)?.into_iter().enumerate() {
                save_tensor(&a, out.join(format!("aug_{k:04}.bin")))?;
                recipes.push_str(&format!(
                    "{k},{},{:?},{},{}\n",
                    r.angle_deg,
                    r.scale,
                    r.noise.name(),
                    r.gaussian_mean.map_or(String::new(), |m| m.to_string())
                ));
            }
            let rp = out.join("recipes.csv");
            std::fs::write(&rp, recipes).map_err(|e| Error::Io { path: rp, source: e })?;
            Ok(json!({"dir": path_str(out), "count": count}))
        }
        Command::Train {
            fold,
            out,
            loss,
            overrides,
        } => {
            require_config(cli)?;
            let cfg = experiment_config(cli, overrides)?;
            let ds = prepare_dataset(&cfg)?;
            let split = fold_splits(&ds, &cfg)?
                .into_iter()
                .nth(*fold)
                .ok_or_else(|| Failure::Usage(format!("fold {fold} out of range (folds = {})", cfg.folds)))?;
            let (outcome, _) = train_fold_cnn(&ds, &split, &cfg)?;
            save_checkpoint(&outcome.params, out)?;
            if let Some(p) = loss {
                write_loss_csv(&outcome.loss_curve, p)?;
            }
            Ok(json!({
                "checkpoint": path_str(out),
                "fold": fold,
                "final_loss": outcome.loss_curve.last(),
                "validation_accuracy": outcome.validation.map(|v| v.accuracy),
            }))
        }
        Command::Features {
            fold,
            checkpoint,
            feature_set: set,
            out,
            test_out,
            overrides,
        } => {
            require_config(cli)?;
            let cfg = experiment_config(cli, overrides)?;
            let params: Option<NetworkParams<f64>> = match (set.uses_cnn(), checkpoint) {
                (true, Some(p)) => Some(load_checkpoint(p)?),
                (true, None) => return Err(Failure::Usage(format!("--feature-set {set} needs --checkpoint"))),
                (false, _) => None,
            };
            let ds = prepare_dataset(&cfg)?;
            let split = fold_splits(&ds, &cfg)?
                .into_iter()
                .nth(*fold)
                .ok_or_else(|| Failure::Usage(format!("fold {fold} out of range (folds = {})", cfg.folds)))?;
            let design = fold_design(&ds, &split, params.as_ref(), *set, &cfg)?;
            write_design_csv(&design, out, test_out)?;
            Ok(json!({
                "train": path_str(out),
                "test": path_str(test_out),
                "train_rows": design.y_train.len(),
                "validation_rows": design.y_val.len(),
                "test_rows": design.y_test.len(),
                "dim": design.x_train.cols(),
            }))
        }
        Command::Regress {
            method,
            train,
            test,
            out,
            overrides,
        } => {
            let cfg = experiment_config(cli, overrides)?;
            let design = read_design_csv(train, test)?;
            let fit = fit_predict(*method, &design, &cfg)?;
            write_predictions_csv(out, &design.test_ids, &design.y_test, &fit)?;
            if !fit.converged {
                return Err(Error::NonConvergence {
                    solver: "baseline solver",
                    iterations: cfg.max_iter,
                }
                .into());
            }
            let acc = margin_accuracy(&fit.predictions, &design.y_test, cfg.margin)?;
            Ok(json!({"predictions": path_str(out), "method": method.name(), "accuracy": acc}))
        }
        Command::Evaluate {
            out,
            predictions,
            overrides,
        } => {
            require_config(cli)?;
            let cfg = experiment_config(cli, overrides)?;
            let result = run_experiment(&cfg, &mut |line| eprintln!("{line}"))?;
            std::fs::write(out, result.report.to_json()).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            if let Some(dir) = predictions {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                for p in &result.predictions {
                    let fit = nodule_core::eval::FitResult {
                        predictions: p.predictions.clone(),
                        variances: p.variances.clone(),
                        converged: true,
                    };
                    let name = format!("fold{}_{}_{}.csv", p.fold, p.method, p.features);
                    write_predictions_csv(&dir.join(name), &p.ids, &p.targets, &fit)?;
                }
            }
            eprint!("{}", render_table(&result.report));
            Ok(json!({
                "report": path_str(out),
                "elapsed_seconds": result.report.elapsed_seconds,
            }))
        }
        Command::Report { report } => {
            let r = load_report(report)?;
            print!("{}", render_table(&r));
            Ok(serde_json::Value::Null)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: {}", first.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(&cli) {
        Ok(serde_json::Value::Null) => ExitCode::SUCCESS,
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            })
        }
    }
}
