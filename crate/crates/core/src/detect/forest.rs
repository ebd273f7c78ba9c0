//! Bagged CART trees with per-split feature subsampling and hard voting.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Gini, GrowParams, Tree};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    /// Features tried per split; `None` means ⌊√d⌋.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 500, max_depth: None, max_features: None, min_samples_split: 2 }
    }
}

/// Collapses identical (row, label) pairs into one row with a multiplicity.
/// First occurrences keep their order.
fn dedupe(x: &[Vec<f64>], y: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let mut slot: HashMap<(Vec<u64>, u64), usize> = HashMap::new();
    let mut rows = Vec::new();
    let mut mult = Vec::new();
    for (i, (xi, yi)) in x.iter().zip(y).enumerate() {
        let key = (xi.iter().map(|v| v.to_bits()).collect(), yi.to_bits());
        match slot.get(&key) {
            Some(&j) => mult[j] += 1.0,
            None => {
                slot.insert(key, rows.len());
                rows.push(i);
                mult.push(1.0);
            }
        }
    }
    (rows, mult)
}

/// Bootstrap weights: as many draws as there are distinct rows, each row
/// picked with probability proportional to its multiplicity.
fn bootstrap<R: Rng + ?Sized>(mult: &[f64], rng: &mut R) -> Vec<f64> {
    let mut cum = Vec::with_capacity(mult.len());
    let mut acc = 0.0;
    for m in mult {
        acc += m;
        cum.push(acc);
    }
    let mut counts = vec![0.0; mult.len()];
    for _ in 0..mult.len() {
        let target = rng.random::<f64>() * acc;
        let j = cum.partition_point(|c| *c <= target).min(mult.len() - 1);
        counts[j] += 1.0;
    }
    counts
}

pub(crate) fn train_forest(x: &[Vec<f64>], y: &[f64], cfg: &ForestConfig, seed: u64) -> Vec<Tree> {
    let d = x[0].len();
    let mtry = cfg.max_features.unwrap_or(((d as f64).sqrt().floor() as usize).max(1)).clamp(1, d);
    let params = GrowParams { max_depth: cfg.max_depth, min_samples_split: cfg.min_samples_split, max_features: mtry };
    let (rows, mult) = dedupe(x, y);
    let ux: Vec<Vec<f64>> = rows.iter().map(|&i| x[i].clone()).collect();
    let uy: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    (0..cfg.n_trees)
        .map(|t| {
            let mut rng = seed::stream(seed, &["tree", &t.to_string()]);
            let w = bootstrap(&mult, &mut rng);
            let drawn: Vec<usize> = (0..w.len()).filter(|&j| w[j] > 0.0).collect();
            grow(&ux, drawn, &Gini { y: &uy, w: &w }, params, &mut rng)
        })
        .collect()
}

/// Number of trees whose leaf votes troll (troll fraction above one half).
pub(crate) fn troll_votes(trees: &[Tree], x: &[f64]) -> usize {
    trees.iter().filter(|t| t.predict(x) > 0.5).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedupe_counts_repeats() {
        let x = vec![vec![1.0], vec![2.0], vec![1.0], vec![1.0]];
        let y = [1.0, 0.0, 1.0, 0.0];
        let (rows, mult) = dedupe(&x, &y);
        assert_eq!(rows, vec![0, 1, 3]);
        assert_eq!(mult, vec![2.0, 1.0, 1.0]);
    }

    #[test]
    fn bootstrap_draws_one_per_row() {
        let w = bootstrap(&[1.0; 50], &mut seed::rng(4));
        assert_eq!(w.iter().sum::<f64>(), 50.0);
        let doubled = bootstrap(&[2.0; 50], &mut seed::rng(4));
        assert_eq!(w, doubled);
    }
}
