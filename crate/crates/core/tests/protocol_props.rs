use std::collections::BTreeSet;

use nodule_core::dataset::{
    balance_indices, consensus_label, stratified_folds, survives_exclusion, Class, NoduleRecord,
};
use nodule_core::eval::{margin_accuracy, mean, sem, FeatureSet, Method, MethodResult};
use proptest::prelude::*;

fn classes_strategy() -> impl Strategy<Value = Vec<Class>> {
    prop::collection::vec(prop::bool::ANY, 4..80).prop_map(|v| {
        v.into_iter()
            .map(|m| if m { Class::Malignant } else { Class::Benign })
            .collect()
    })
}

fn record(i: usize, ratings: Vec<u8>) -> NoduleRecord {
    NoduleRecord {
        id: format!("r{i}"),
        volume_path: format!("v{i}.rvol"),
        center: [0; 3],
        ratings,
        attributes: [Some(3.0); 6],
    }
}

proptest! {
    #[test]
    fn folds_partition_and_stratify(classes in classes_strategy(), k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(k <= classes.len());
        let folds = stratified_folds(&classes, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen = BTreeSet::new();
        for f in &folds {
            for &i in f {
                prop_assert!(seen.insert(i), "index {} in two folds", i);
            }
        }
        prop_assert_eq!(seen.len(), classes.len());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for class in [Class::Benign, Class::Malignant] {
            let per: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| classes[i] == class).count()).collect();
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
        prop_assert_eq!(&folds, &stratified_folds(&classes, k, seed).unwrap());
    }

    #[test]
    fn balance_equalizes_classes(classes in classes_strategy(), seed in any::<u64>()) {
        let idx: Vec<usize> = (0..classes.len()).collect();
        let both = classes.contains(&Class::Benign) && classes.contains(&Class::Malignant);
        match balance_indices(&idx, &classes, seed) {
            Ok(out) => {
                prop_assert!(both);
                let m = out.iter().filter(|&&i| classes[i] == Class::Malignant).count();
                prop_assert_eq!(2 * m, out.len());
                let input: BTreeSet<usize> = idx.iter().copied().collect();
                prop_assert!(out.iter().all(|i| input.contains(i)));
                prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
            }
            Err(_) => prop_assert!(!both),
        }
    }

    #[test]
    fn exclusion_rule_is_exact(sets in prop::collection::vec(prop::collection::vec(1u8..=5, 0..5), 1..40)) {
        let records: Vec<NoduleRecord> = sets.iter().cloned().enumerate().map(|(i, r)| record(i, r)).collect();
        let (kept, counts) = consensus_label(&records);
        let expected: Vec<&Vec<u8>> = sets
            .iter()
            .filter(|r| r.len() >= 3 && r.iter().map(|&v| v as u32).sum::<u32>() != 3 * r.len() as u32)
            .collect();
        prop_assert_eq!(kept.len(), expected.len());
        prop_assert_eq!(counts.too_few_raters, sets.iter().filter(|r| r.len() < 3).count());
        prop_assert_eq!(kept.len() + counts.too_few_raters + counts.neutral_score, sets.len());
        for (s, r) in kept.iter().zip(expected) {
            prop_assert!(survives_exclusion(r));
            let m = r.iter().map(|&v| v as f64).sum::<f64>() / r.len() as f64;
            prop_assert_eq!(s.consensus_score, m);
            prop_assert_eq!(s.class, if m < 3.0 { Class::Benign } else { Class::Malignant });
        }
    }

    #[test]
    fn margin_accuracy_symmetric_under_permutation(
        pairs in prop::collection::vec((1.0f64..5.0, 1.0f64..5.0), 1..30),
        rot in 0usize..30,
    ) {
        let (p, l): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
        let r = rot % p.len();
        let mut pr = p.clone();
        let mut lr = l.clone();
        pr.rotate_left(r);
        lr.rotate_left(r);
        prop_assert_eq!(margin_accuracy(&p, &l, 1.0).unwrap(), margin_accuracy(&pr, &lr, 1.0).unwrap());
    }

    #[test]
    fn report_stats_recompute(accs in prop::collection::vec(0.0f64..1.0, 2..12), rot in 0usize..12) {
        let r = MethodResult::new(Method::Gp, FeatureSet::Cnn, accs.clone(), 0).unwrap();
        prop_assert!((r.mean_accuracy() - mean(&r.fold_accuracies)).abs() <= 1e-12);
        prop_assert!(r.sem_pct >= 0.0);
        let mut perm = accs.clone();
        perm.rotate_left(rot % accs.len());
        prop_assert!((mean(&perm) - mean(&accs)).abs() <= 1e-12);
        prop_assert!((sem(&perm).unwrap() - sem(&accs).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn exclusion_examples() {
    assert!(!survives_exclusion(&[3, 3, 3]));
    assert!(!survives_exclusion(&[2, 4, 3, 3]));
    assert!(!survives_exclusion(&[5, 5]));
    assert!(survives_exclusion(&[3, 3, 4]));
}

#[test]
fn margin_boundary_is_inclusive() {
    assert_eq!(margin_accuracy(&[2.0, 4.0], &[3.0, 3.0], 1.0).unwrap(), 1.0);
    assert_eq!(margin_accuracy(&[2.0, 4.5], &[3.0, 3.0], 1.0).unwrap(), 0.5);
    assert_eq!(margin_accuracy(&[1.0, 2.0], &[1.0, 2.0], 0.0).unwrap(), 1.0);
}

#[test]
fn sem_of_two_folds() {
    assert_eq!(sem(&[80.0, 90.0]).unwrap(), 5.0);
}
