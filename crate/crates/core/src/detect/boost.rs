//! Gradient-boosted trees on the logistic loss with Newton leaf weights.

use serde::{Deserialize, Serialize};

use super::tree::{grow, GrowParams, Newton, Tree};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum hessian mass per child.
    pub min_child_weight: f64,
    /// Features tried per split; `None` uses all of them.
    pub max_features: Option<usize>,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            n_trees: 300,
            max_depth: 6,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_weight: 1.0,
            max_features: None,
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Trees whose summed outputs form the troll log-odds (starting from 0).
pub(crate) fn train_boost(x: &[Vec<f64>], y: &[f64], cfg: &BoostConfig, seed: u64) -> Vec<Tree> {
    let d = x[0].len();
    let params = GrowParams {
        max_depth: Some(cfg.max_depth),
        min_samples_split: 2,
        max_features: cfg.max_features.unwrap_or(d).clamp(1, d),
    };
    let mut margin = vec![0.0; x.len()];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for t in 0..cfg.n_trees {
        let mut g = Vec::with_capacity(x.len());
        let mut h = Vec::with_capacity(x.len());
        for (m, yi) in margin.iter().zip(y) {
            let p = sigmoid(*m);
            g.push(p - yi);
            h.push((p * (1.0 - p)).max(1e-16));
        }
        let crit = Newton {
            g: &g,
            h: &h,
            lambda: cfg.lambda,
            min_child_weight: cfg.min_child_weight,
            shrinkage: cfg.learning_rate,
        };
        let mut rng = seed::stream(seed, &["boost", &t.to_string()]);
        let tree = grow(x, (0..x.len()).collect(), &crit, params, &mut rng);
        for (m, xi) in margin.iter_mut().zip(x) {
            *m += tree.predict(xi);
        }
        trees.push(tree);
    }
    trees
}

pub(crate) fn margin(trees: &[Tree], x: &[f64]) -> f64 {
    trees.iter().map(|t| t.predict(x)).sum()
}
