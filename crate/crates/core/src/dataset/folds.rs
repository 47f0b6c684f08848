use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{Class, LabeledSample};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    /// Sample ids per fold.
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }
}

/// Stratified k-fold assignment over sample indices.
///
/// Each class is shuffled and dealt round-robin; the second class continues
/// from the fold where the first stopped, so fold sizes differ by at most one
/// and each class's per-fold count differs by at most one. Folds list indices
/// in ascending order.
pub fn stratified_folds(classes: &[Class], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid("k", "need at least two folds"));
    }
    if k > classes.len() {
        return Err(Error::invalid("k", format!("{k} folds for {} samples", classes.len())));
    }
    let mut rng = seed::rng_for(seed, seed::TAG_FOLDS);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [Class::Benign, Class::Malignant] {
        let mut idx: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

pub fn make_folds(samples: &[LabeledSample], k: usize, seed: u64) -> Result<FoldPlan> {
    let classes: Vec<Class> = samples.iter().map(|s| s.class).collect();
    let folds = stratified_folds(&classes, k, seed)?
        .into_iter()
        .map(|f| f.into_iter().map(|i| samples[i].id().to_string()).collect())
        .collect();
    Ok(FoldPlan { seed, folds })
}

/// Undersamples the majority class of `indices` (classes looked up in
/// `classes`) to the minority count. Output keeps the input order.
pub fn balance_indices(indices: &[usize], classes: &[Class], seed: u64) -> Result<Vec<usize>> {
    let (benign, malignant): (Vec<usize>, Vec<usize>) =
        indices.iter().copied().partition(|&i| classes[i] == Class::Benign);
    if benign.is_empty() || malignant.is_empty() {
        return Err(Error::invalid("balance", "both classes must be present"));
    }
    let (major, minor) = if benign.len() >= malignant.len() {
        (benign, malignant)
    } else {
        (malignant, benign)
    };
    let mut rng = seed::rng_for(seed, seed::TAG_BALANCE);
    let mut keep = vec![false; classes.len()];
    for &i in major.choose_multiple(&mut rng, minor.len()).chain(&minor) {
        keep[i] = true;
    }
    Ok(indices.iter().copied().filter(|&i| keep[i]).collect())
}

/// Balanced subset of sample ids.
pub fn balance(samples: &[LabeledSample], ids: &[String], seed: u64) -> Result<Vec<String>> {
    let classes: Vec<Class> = samples.iter().map(|s| s.class).collect();
    let indices = ids
        .iter()
        .map(|id| {
            samples
                .iter()
                .position(|s| s.id() == id)
                .ok_or_else(|| Error::invalid("balance", format!("unknown id {id:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(balance_indices(&indices, &classes, seed)?
        .into_iter()
        .map(|i| samples[i].id().to_string())
        .collect())
}
