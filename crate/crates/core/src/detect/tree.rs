//! Binary decision trees grown by exhaustive threshold search.
//!
//! One grower serves both ensembles: classification trees score splits by Gini
//! impurity, boosting trees by second-order (gradient, hessian) gain.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Additive two-component node statistics plus the scoring rules built on them.
pub(crate) trait Criterion {
    fn stats(&self, i: usize) -> [f64; 2];
    /// Node score; a split's gain is score(left) + score(right) - score(node).
    fn score(&self, s: &[f64; 2]) -> f64;
    fn leaf(&self, s: &[f64; 2]) -> f64;
    fn terminal(&self, s: &[f64; 2]) -> bool;
    fn valid_children(&self, left: &[f64; 2], right: &[f64; 2]) -> bool;
    /// Splits must gain strictly more than this.
    fn min_gain(&self) -> f64;
}

/// Weighted Gini; stats are (troll weight, total weight) and leaves hold the
/// troll fraction.
pub(crate) struct Gini<'a> {
    pub y: &'a [f64],
    pub w: &'a [f64],
}

impl Criterion for Gini<'_> {
    fn stats(&self, i: usize) -> [f64; 2] {
        [self.w[i] * self.y[i], self.w[i]]
    }

    fn score(&self, s: &[f64; 2]) -> f64 {
        let other = s[1] - s[0];
        (s[0] * s[0] + other * other) / s[1]
    }

    fn leaf(&self, s: &[f64; 2]) -> f64 {
        s[0] / s[1]
    }

    fn terminal(&self, s: &[f64; 2]) -> bool {
        s[0] == 0.0 || s[0] == s[1]
    }

    fn valid_children(&self, left: &[f64; 2], right: &[f64; 2]) -> bool {
        left[1] > 0.0 && right[1] > 0.0
    }

    fn min_gain(&self) -> f64 {
        f64::NEG_INFINITY
    }
}

/// Newton boosting; stats are (gradient sum, hessian sum), leaves hold the
/// shrunken optimal weight.
pub(crate) struct Newton<'a> {
    pub g: &'a [f64],
    pub h: &'a [f64],
    pub lambda: f64,
    pub min_child_weight: f64,
    pub shrinkage: f64,
}

impl Criterion for Newton<'_> {
    fn stats(&self, i: usize) -> [f64; 2] {
        [self.g[i], self.h[i]]
    }

    fn score(&self, s: &[f64; 2]) -> f64 {
        s[0] * s[0] / (s[1] + self.lambda)
    }

    fn leaf(&self, s: &[f64; 2]) -> f64 {
        -self.shrinkage * s[0] / (s[1] + self.lambda)
    }

    fn terminal(&self, s: &[f64; 2]) -> bool {
        s[1] < 2.0 * self.min_child_weight
    }

    fn valid_children(&self, left: &[f64; 2], right: &[f64; 2]) -> bool {
        left[1] >= self.min_child_weight && right[1] >= self.min_child_weight
    }

    fn min_gain(&self) -> f64 {
        1e-12
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features examined per split. The search continues past this count
    /// while no valid split has been found.
    pub max_features: usize,
}

struct Grower<'a, C> {
    x: &'a [Vec<f64>],
    crit: &'a C,
    params: GrowParams,
    nodes: Vec<Node>,
}

/// Grows a tree over the given row indices (each listed once; weights live in
/// the criterion).
pub(crate) fn grow<C: Criterion, R: Rng + ?Sized>(
    x: &[Vec<f64>],
    rows: Vec<usize>,
    crit: &C,
    params: GrowParams,
    rng: &mut R,
) -> Tree {
    let mut grower = Grower { x, crit, params, nodes: Vec::new() };
    grower.build(rows, 0, rng);
    Tree { nodes: grower.nodes }
}

fn add(a: &mut [f64; 2], b: [f64; 2]) {
    a[0] += b[0];
    a[1] += b[1];
}

impl<C: Criterion> Grower<'_, C> {
    fn build<R: Rng + ?Sized>(&mut self, rows: Vec<usize>, depth: usize, rng: &mut R) -> usize {
        let id = self.nodes.len();
        let mut total = [0.0; 2];
        for &i in &rows {
            add(&mut total, self.crit.stats(i));
        }
        self.nodes.push(Node::Leaf { value: self.crit.leaf(&total) });
        let stop = self.crit.terminal(&total)
            || rows.len() < self.params.min_samples_split
            || self.params.max_depth.is_some_and(|d| depth >= d);
        if stop {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows, &total, rng) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| self.x[i][feature] <= threshold);
        let left = self.build(left_rows, depth + 1, rng);
        let right = self.build(right_rows, depth + 1, rng);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }

    fn best_split<R: Rng + ?Sized>(&self, rows: &[usize], total: &[f64; 2], rng: &mut R) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        if self.params.max_features < d {
            features.shuffle(rng);
        }
        let parent = self.crit.score(total);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = rows.to_vec();
        for (visited, &f) in features.iter().enumerate() {
            if visited >= self.params.max_features && best.is_some() {
                break;
            }
            let x = self.x;
            order.sort_by(|a, b| x[*a][f].total_cmp(&x[*b][f]).then(a.cmp(b)));
            let mut left = [0.0; 2];
            for k in 0..order.len() - 1 {
                add(&mut left, self.crit.stats(order[k]));
                let v = x[order[k]][f];
                let next = x[order[k + 1]][f];
                if next <= v {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                if !self.crit.valid_children(&left, &right) {
                    continue;
                }
                let gain = self.crit.score(&left) + self.crit.score(&right) - parent;
                if gain > self.crit.min_gain() && best.is_none_or(|b| gain > b.0) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some((gain, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}
