//! Repeated stratified k-fold splits.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::ingest::Label;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// For every repeat, shuffles each class independently and deals its members
/// round-robin onto `k` folds, so per-class fold sizes differ by at most one.
pub fn stratified_kfold(labels: &[Label], k: usize, repeats: usize, seed: u64) -> Result<Vec<Split>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k-fold needs k >= 2, got {k}")));
    }
    for class in [Label::Troll, Label::Organic] {
        let count = labels.iter().filter(|l| **l == class).count();
        if count < k {
            return Err(Error::ClassTooSmall { class: class.to_string(), count, k });
        }
    }
    let mut splits = Vec::with_capacity(k * repeats);
    for repeat in 0..repeats {
        let mut rng = seed::stream(seed, &["folds", &repeat.to_string()]);
        let mut fold_of = vec![0usize; labels.len()];
        for class in [Label::Troll, Label::Organic] {
            let mut members: Vec<usize> = (0..labels.len()).filter(|i| labels[*i] == class).collect();
            members.shuffle(&mut rng);
            for (pos, i) in members.into_iter().enumerate() {
                fold_of[i] = pos % k;
            }
        }
        for fold in 0..k {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|i| fold_of[*i] == fold);
            splits.push(Split { repeat, fold, train, test });
        }
    }
    Ok(splits)
}
