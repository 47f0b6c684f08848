use nodule_core::dataset::{synth_generate, SynthConfig};
use nodule_core::eval::{run_experiment, ExperimentConfig, FeatureSet, Method};

fn tiny(dir: &std::path::Path) -> ExperimentConfig {
    let synth = SynthConfig {
        count: 36,
        side: 25,
        seed: 3,
        ..SynthConfig::default()
    };
    let out = synth_generate(&synth, dir).unwrap();
    let mut cfg = ExperimentConfig {
        manifest: out.manifest,
        seed: 11,
        folds: 3,
        spacing_mm: 1.5,
        patch_side: 9,
        conv_channels: [2, 3, 3, 3, 3],
        fc_widths: [6, 4],
        iterations: 15,
        batch_size: 4,
        subsample: 60,
        gp_select_rows: 30,
        methods: Method::ALL.to_vec(),
        feature_sets: FeatureSet::ALL.to_vec(),
        ..ExperimentConfig::default()
    };
    cfg.augment.count = 3;
    cfg
}

#[test]
fn no_test_nodule_reaches_training_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let out = run_experiment(&cfg, &mut |_| {}).unwrap();
    assert_eq!(out.traces.len(), cfg.folds);
    let mut all_test = std::collections::BTreeSet::new();
    for t in &out.traces {
        assert!(!t.test.is_empty());
        assert!(all_test.is_disjoint(&t.test));
        all_test.extend(&t.test);
        for stage in [&t.validation, &t.balance_input, &t.cnn_reads, &t.regression_train] {
            assert!(t.test.is_disjoint(stage), "fold {} leaks", t.fold);
        }
        assert!(t.validation.is_disjoint(&t.regression_train));
        assert!(t.validation.is_disjoint(&t.balance_input));
        assert!(t.regression_train.is_subset(&t.balance_input));
        let allowed: std::collections::BTreeSet<usize> = t.balance_input.union(&t.validation).copied().collect();
        assert!(t.cnn_reads.is_subset(&allowed));
    }
    assert_eq!(all_test.len(), out.report.nodules);
    assert_eq!(out.report.results.len(), 12);
    for r in &out.report.results {
        assert_eq!(r.fold_accuracies.len(), 3);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.methods = vec![Method::Gp, Method::Lasso];
    let a = run_experiment(&cfg, &mut |_| {}).unwrap();
    let b = run_experiment(&cfg, &mut |_| {}).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.predictions, b.predictions);

    cfg.seed += 1;
    let c = run_experiment(&cfg, &mut |_| {}).unwrap();
    assert_ne!(a.predictions, c.predictions);
}
