//! Acceptance suite: one PASS/FAIL line per criterion, with wall-clock time
//! against its budget. Runs without the libtest harness so the lines always
//! show.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use nodule_core::baselines::{fit_elastic_net, fit_lasso, fit_svr_traced, lambda_max, SolverOptions};
use nodule_core::cnn::NetworkConfig;
use nodule_core::dataset::{
    balance_indices, consensus_label, stratified_folds, synth_generate, Class, NoduleRecord, SynthConfig,
};
use nodule_core::eval::{margin_accuracy, run_experiment, sem, ExperimentConfig, FeatureSet, Method};
use nodule_core::gpr::{GpModel, KernelConfig};
use nodule_core::linalg::Matrix;
use nodule_core::seed;
use nodule_core::volume::{median_projection, Axis};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn median_oracle_criterion() -> Outcome {
    let mut compared = 0;
    for i in 0..200u64 {
        let side = [3, 5, 9][(i % 3) as usize];
        let patch = common::random_patch(side, 50_000 + i);
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let img = median_projection(&patch, axis).map_err(|e| e.to_string())?;
            check(
                img.data == common::median_oracle(&patch, axis),
                format!("patch {i} axis {axis:?} differs"),
            )?;
            compared += img.data.len();
        }
    }
    Ok(format!("200 patches, {compared} pixels exact"))
}

fn gradient_criterion() -> Outcome {
    let mut worst = common::gradcheck::max_relative_error(&NetworkConfig::with_widths(9, [2; 5], [8, 4]), 1);
    let mut rng = seed::rng(4242);
    for trial in 0..10 {
        let side = [8, 9, 11, 12][rng.random_range(0..4)];
        let widths = std::array::from_fn(|_| rng.random_range(1..=3));
        let hidden = [rng.random_range(2..=8), rng.random_range(2..=6)];
        let cfg = NetworkConfig::with_widths(side, widths, hidden);
        worst = worst.max(common::gradcheck::max_relative_error(&cfg, 900 + trial));
    }
    check(
        worst < common::gradcheck::TOLERANCE,
        format!("max relative error {worst:e}"),
    )?;
    Ok(format!("11 configs, max relative error {worst:.2e}"))
}

fn gp_criterion() -> Outcome {
    let mat = |r: &[Vec<f64>]| Matrix::from_rows(r).unwrap();
    let mut worst = 0.0f64;
    for s in 0..20 {
        let (x, y, xq, k) = common::gp::fixture(s);
        let p = GpModel::fit(mat(&x), y.clone(), k)
            .and_then(|m| m.predict(&mat(&xq)))
            .map_err(|e| e.to_string())?;
        let (mean, var) = common::gp::dense_posterior(&x, &y, &xq, &k);
        for i in 0..xq.len() {
            worst = worst
                .max((p.mean[i] - mean[i]).abs())
                .max((p.variance[i] - var[i].max(0.0)).abs());
        }
    }
    check(worst < 1e-8, format!("dense-inverse gap {worst:e}"))?;
    let mut interp = 0.0f64;
    for s in 0..20 {
        let (x, y, _, k) = common::gp::fixture(100 + s);
        let k = KernelConfig::new(k.sigma_f, 0.3, 0.0).unwrap();
        let p = GpModel::fit(mat(&x), y.clone(), k)
            .and_then(|m| m.predict(&mat(&x)))
            .map_err(|e| e.to_string())?;
        for (m, t) in p.mean.iter().zip(&y) {
            interp = interp.max((m - t).abs());
        }
    }
    check(interp < 1e-6, format!("interpolation gap {interp:e}"))?;
    Ok(format!("dense gap {worst:.1e}, interpolation gap {interp:.1e}"))
}

fn linear_problem(n: usize, d: usize, s: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = seed::rng(s);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let y = x
        .iter()
        .map(|r| {
            2.0 + r.iter().enumerate().map(|(j, v)| (j as f64 - 0.7) * v).sum::<f64>() + rng.random_range(-1.0..1.0)
        })
        .collect();
    (x, y)
}

fn baselines_criterion() -> Outcome {
    let tight = SolverOptions {
        tol: 1e-12,
        max_iter: 100_000,
    };
    let (x, y) = linear_problem(20, 3, 8);
    let xm = Matrix::from_rows(&x).unwrap();
    let (w, b) = fit_lasso(&xm, &y, 0.0, tight)
        .map_err(|e| e.to_string())?
        .raw_coefficients();
    let (w_ref, b_ref) = common::ols(&x, &y);
    let ols_gap = w
        .iter()
        .zip(&w_ref)
        .map(|(a, e)| (a - e).abs())
        .fold((b - b_ref).abs(), f64::max);
    check(ols_gap < 1e-6, format!("normal equations gap {ols_gap:e}"))?;

    let lm = lambda_max(&xm, &y).map_err(|e| e.to_string())?;
    for f in [1.0, 2.0] {
        let m = fit_lasso(&xm, &y, lm * f, tight).map_err(|e| e.to_string())?;
        check(m.weights.iter().all(|&v| v == 0.0), "nonzero weights above lambda_max")?;
    }

    let n = x.len() as f64;
    let mut xs = DMatrix::from_fn(x.len(), 3, |i, j| x[i][j]);
    for j in 0..3 {
        let mu = xs.column(j).sum() / n;
        let sd = (xs.column(j).iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
        xs.column_mut(j).apply(|v| *v = (*v - mu) / sd);
    }
    let ybar = y.iter().sum::<f64>() / n;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - ybar));
    let lambda = 0.5;
    let ridge = fit_elastic_net(&xm, &y, lambda, 0.0, tight).map_err(|e| e.to_string())?;
    let w_ref = (xs.transpose() * &xs / n + DMatrix::identity(3, 3) * lambda)
        .try_inverse()
        .unwrap()
        * xs.transpose()
        * yc
        / n;
    let ridge_gap = ridge
        .weights
        .iter()
        .zip(w_ref.iter())
        .map(|(a, e)| (a - e).abs())
        .fold(0.0, f64::max);
    check(ridge_gap < 1e-6, format!("ridge gap {ridge_gap:e}"))?;

    let (xs_svr, ys_svr) = linear_problem(60, 4, 9);
    let xm = Matrix::from_rows(&xs_svr).unwrap();
    for c in [0.1, 1.0, 10.0] {
        let (_, trace) = fit_svr_traced(
            &xm,
            &ys_svr,
            c,
            0.1,
            SolverOptions {
                tol: 1e-6,
                max_iter: 5000,
            },
        )
        .map_err(|e| e.to_string())?;
        let rises = trace
            .objective
            .windows(2)
            .filter(|w| w[1] > w[0] + 1e-9 * w[0].abs().max(1.0))
            .count();
        check(rises == 0, format!("c={c}: objective rose {rises} times"))?;
        check(
            trace.max_abs_dual.iter().all(|&m| m <= c),
            format!("c={c}: dual left the box"),
        )?;
    }
    Ok(format!(
        "ols gap {ols_gap:.1e}, ridge gap {ridge_gap:.1e}, svr traces monotone"
    ))
}

fn protocol_criterion() -> Outcome {
    let mut rng = seed::rng(31);
    for trial in 0..200 {
        let n = rng.random_range(10..120);
        let classes: Vec<Class> = (0..n)
            .map(|_| {
                if rng.random_bool(0.4) {
                    Class::Malignant
                } else {
                    Class::Benign
                }
            })
            .collect();
        let k = rng.random_range(2..=10);
        let folds = stratified_folds(&classes, k, trial).map_err(|e| e.to_string())?;
        let union: BTreeSet<usize> = folds.iter().flatten().copied().collect();
        check(
            union.len() == n && folds.iter().map(Vec::len).sum::<usize>() == n,
            "folds not a partition",
        )?;
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        check(
            sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1,
            "fold sizes spread",
        )?;
        for class in [Class::Benign, Class::Malignant] {
            let per: Vec<usize> = folds
                .iter()
                .map(|f| f.iter().filter(|&&i| classes[i] == class).count())
                .collect();
            check(
                per.iter().max().unwrap() - per.iter().min().unwrap() <= 1,
                "folds not stratified",
            )?;
        }
        if classes.contains(&Class::Benign) && classes.contains(&Class::Malignant) {
            let idx: Vec<usize> = (0..n).collect();
            let bal = balance_indices(&idx, &classes, trial).map_err(|e| e.to_string())?;
            let m = bal.iter().filter(|&&i| classes[i] == Class::Malignant).count();
            check(2 * m == bal.len(), "balance unequal")?;
        }
    }

    let mut records = Vec::new();
    for i in 0..500 {
        let count = rng.random_range(1..=4);
        records.push(NoduleRecord {
            id: format!("r{i}"),
            volume_path: String::new(),
            center: [0; 3],
            ratings: (0..count).map(|_| rng.random_range(1..=5)).collect(),
            attributes: [Some(3.0); 6],
        });
    }
    let (kept, counts) = consensus_label(&records);
    let expected = records
        .iter()
        .filter(|r| r.ratings.len() >= 3 && r.ratings.iter().map(|&v| v as usize).sum::<usize>() != 3 * r.ratings.len())
        .count();
    check(kept.len() == expected, "exclusion rule mismatch")?;
    check(
        kept.len() + counts.too_few_raters + counts.neutral_score == records.len(),
        "exclusion counts",
    )?;

    check(
        margin_accuracy(&[2.0, 4.0, 4.5], &[3.0, 3.0, 3.0], 1.0).unwrap() == 2.0 / 3.0,
        "margin boundary",
    )?;
    let s = sem(&[80.0, 90.0]).map_err(|e| e.to_string())?;
    check(s == 5.0, format!("sem(80, 90) = {s}"))?;
    Ok(format!("200 fold plans, {} records labeled, sem {s}", kept.len()))
}

fn benchmark_config(manifest: std::path::PathBuf) -> ExperimentConfig {
    let mut cfg =
        ExperimentConfig::parse(include_str!("../../../configs/benchmark.cfg")).expect("benchmark config parses");
    cfg.manifest = manifest;
    cfg
}

fn run_benchmark(cfg: &ExperimentConfig) -> Result<(String, f64, f64), String> {
    let out = run_experiment(cfg, &mut |line| eprintln!("  {line}")).map_err(|e| e.to_string())?;
    let acc = |set| {
        out.report
            .result(Method::Gp, set)
            .map(|r| r.mean_accuracy())
            .ok_or_else(|| format!("no gp/{set} result"))
    };
    Ok((out.report.to_json(), acc(FeatureSet::Cnn)?, acc(FeatureSet::Fused)?))
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, budget: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if took <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over budget {:?}", budget)),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!("{status} criterion {id} {name}: {detail} [{:.2}s]", took.as_secs_f64());
    };

    report(
        1,
        "median projection oracle",
        Duration::from_secs(5),
        &mut median_oracle_criterion,
    );
    report(
        2,
        "cnn gradient check",
        Duration::from_secs(60),
        &mut gradient_criterion,
    );
    report(3, "gp dense-inverse oracle", Duration::from_secs(5), &mut gp_criterion);
    report(
        4,
        "baseline optimality",
        Duration::from_secs(30),
        &mut baselines_criterion,
    );
    report(
        5,
        "protocol correctness",
        Duration::from_secs(5),
        &mut protocol_criterion,
    );

    let dir = tempfile::tempdir().expect("temp dir");
    let synth = SynthConfig {
        count: 300,
        seed: 7,
        ..SynthConfig::default()
    };
    let manifest = synth_generate(&synth, dir.path()).expect("synthetic data").manifest;
    let cfg = benchmark_config(manifest);

    let mut first = None;
    report(6, "synthetic benchmark", Duration::from_secs(15 * 60), &mut || {
        let (json, cnn, fused) = run_benchmark(&cfg)?;
        first = Some(json);
        check(cnn >= 0.75, format!("gp/cnn mean accuracy {cnn:.4} < 0.75"))?;
        check(fused >= cnn, format!("fused {fused:.4} below cnn {cnn:.4}"))?;
        Ok(format!("gp/cnn {cnn:.4}, gp/fused {fused:.4}"))
    });
    report(7, "reproducibility", Duration::from_secs(15 * 60), &mut || {
        let a = first.as_ref().ok_or("first benchmark run failed")?;
        let (b, _, _) = run_benchmark(&cfg)?;
        check(*a == b, "report JSON differs between runs")?;
        Ok(format!("{} byte report identical", b.len()))
    });

    if failures > 0 {
        eprintln!("{failures} criteria failed");
        std::process::exit(1);
    }
}
