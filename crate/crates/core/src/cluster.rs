//! k-means over flattened policies, with silhouette and inertia diagnostics
//! for choosing k and per-cluster action-marginal profiles.

use std::ops::RangeInclusive;

use rand::Rng;
use serde::Serialize;

use crate::detect::experiment::Percentiles;
use crate::error::{Error, Result};
use crate::mdp::{N_ACTIONS, N_STATES};
use crate::par;
use crate::policy::Policy;
use crate::seed;

pub const MAX_ITERATIONS: usize = 300;
pub const DEFAULT_RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterResult {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// `None` when fewer than two clusters are non-empty.
    pub silhouette_mean: Option<f64>,
    pub iterations: usize,
    /// Inertia after each Lloyd iteration.
    pub inertia_trace: Vec<f64>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_matrix(x: &[Vec<f64>]) -> Result<usize> {
    let d = x.first().ok_or(Error::EmptyList)?.len();
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: row.len() });
    }
    Ok(d)
}

fn plus_plus<R: Rng + ?Sized>(x: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![x[rng.random_range(0..x.len())].clone()];
    let mut d2: Vec<f64> = x.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 { seed::categorical(rng, &d2) } else { rng.random_range(0..x.len()) };
        let c = x[next].clone();
        for (d, p) in d2.iter_mut().zip(x) {
            *d = d.min(dist2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

fn means(x: &[Vec<f64>], assign: &[usize], k: usize, d: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in x.iter().zip(assign) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, n) in sums.iter_mut().zip(counts) {
        s.iter_mut().for_each(|v| *v /= n.max(1) as f64);
    }
    sums
}

/// Lloyd iterations from k-means++ seeding. An empty cluster takes the point
/// farthest from its current centroid.
pub fn kmeans(x: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterResult> {
    let d = check_matrix(x)?;
    if k == 0 || x.len() < k {
        return Err(Error::TooFewPoints { points: x.len(), k });
    }
    let mut rng = seed::rng(seed);
    let mut centroids = plus_plus(x, k, &mut rng);
    let mut assign = vec![usize::MAX; x.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..MAX_ITERATIONS {
        iterations += 1;
        let next: Vec<usize> = x.iter().map(|p| nearest(p, &centroids)).collect();
        let mut changed = next != assign;
        assign = next;
        loop {
            let mut counts = vec![0usize; k];
            assign.iter().for_each(|c| counts[*c] += 1);
            let Some(empty) = counts.iter().position(|n| *n == 0) else { break };
            let far = (0..x.len())
                .filter(|i| counts[assign[*i]] > 1)
                .max_by(|a, b| {
                    dist2(&x[*a], &centroids[assign[*a]]).total_cmp(&dist2(&x[*b], &centroids[assign[*b]])).then(b.cmp(a))
                })
                .expect("n >= k leaves a cluster with two members");
            assign[far] = empty;
            centroids[empty] = x[far].clone();
            changed = true;
        }
        centroids = means(x, &assign, k, d);
        trace.push(x.iter().zip(&assign).map(|(p, c)| dist2(p, &centroids[*c])).sum());
        if !changed {
            break;
        }
    }
    let inertia = *trace.last().expect("at least one iteration");
    let silhouette_mean = if k >= 2 { silhouette(x, &assign).ok().map(|s| s.mean) } else { None };
    Ok(ClusterResult { k, assignments: assign, centroids, inertia, silhouette_mean, iterations, inertia_trace: trace })
}

/// Best of `restarts` runs by inertia; ties keep the lowest restart index.
pub fn kmeans_restarts(x: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<ClusterResult> {
    let runs: Vec<usize> = (0..restarts.max(1)).collect();
    let results = par::map(&runs, |r| kmeans(x, k, seed::derive(seed, &["kmeans", &k.to_string(), &r.to_string()])));
    let mut best: Option<ClusterResult> = None;
    for r in results {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.inertia < b.inertia) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Silhouette {
    pub values: Vec<f64>,
    pub mean: f64,
}

/// Euclidean silhouette; members of singleton clusters score 0.
pub fn silhouette(x: &[Vec<f64>], assignments: &[usize]) -> Result<Silhouette> {
    check_matrix(x)?;
    if x.len() != assignments.len() {
        return Err(Error::LengthMismatch(x.len(), assignments.len()));
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    assignments.iter().for_each(|c| sizes[*c] += 1);
    if sizes.iter().filter(|n| **n > 0).count() < 2 {
        return Err(Error::SingleCluster);
    }
    let values: Vec<f64> = (0..x.len())
        .map(|i| {
            let own = assignments[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for (j, p) in x.iter().enumerate() {
                if j != i {
                    sums[assignments[j]] += dist2(&x[i], p).sqrt();
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|c| *c != own && sizes[*c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 { (b - a) / m } else { 0.0 }
        })
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(Silhouette { values, mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KDiagnostic {
    pub k: usize,
    pub inertia: f64,
    pub silhouette: f64,
}

/// Inertia and mean silhouette of the best of ten restarts for each k.
pub fn select_k(x: &[Vec<f64>], k_range: RangeInclusive<usize>, seed: u64) -> Result<Vec<KDiagnostic>> {
    let n = x.len();
    if *k_range.start() < 2 || *k_range.end() + 1 > n || k_range.is_empty() {
        return Err(Error::InvalidConfig(format!("k range {k_range:?} must lie within [2, {}]", n.saturating_sub(1))));
    }
    k_range
        .map(|k| {
            let r = kmeans_restarts(x, k, DEFAULT_RESTARTS, seed)?;
            let s = silhouette(x, &r.assignments)?;
            Ok(KDiagnostic { k, inertia: r.inertia, silhouette: s.mean })
        })
        .collect()
}

/// The k with the largest mean silhouette (smallest k on ties).
pub fn silhouette_peak(table: &[KDiagnostic]) -> Option<usize> {
    table.iter().fold(None::<&KDiagnostic>, |best, d| match best {
        Some(b) if b.silhouette >= d.silhouette => Some(b),
        _ => Some(d),
    })
    .map(|d| d.k)
}

/// m(a) = Σs w(s)·π(a|s) / Σs w(s). Without weights every state counts equally.
pub fn action_marginal(policy: &Policy, weights: Option<&[f64; N_STATES]>) -> Result<[f64; N_ACTIONS]> {
    let w = weights.copied().unwrap_or([1.0; N_STATES]);
    let total: f64 = w.iter().sum();
    if w.iter().any(|v| *v < 0.0 || !v.is_finite()) || total <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    let mut m = [0.0; N_ACTIONS];
    for (row, ws) in policy.pi.iter().zip(w) {
        for (ma, p) in m.iter_mut().zip(row) {
            *ma += ws * p / total;
        }
    }
    Ok(m)
}

/// Fraction of point pairs on which two partitions agree.
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let mut agree = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    Ok(agree as f64 / (n * (n - 1) / 2) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterProfile {
    pub cluster: usize,
    pub size: usize,
    /// Per-action percentiles of the members' marginals.
    pub marginal: Vec<Percentiles>,
}

pub fn cluster_profiles(marginals: &[[f64; N_ACTIONS]], assignments: &[usize], k: usize) -> Vec<ClusterProfile> {
    (0..k)
        .map(|c| {
            let members: Vec<&[f64; N_ACTIONS]> =
                marginals.iter().zip(assignments).filter(|(_, a)| **a == c).map(|(m, _)| m).collect();
            let marginal = (0..N_ACTIONS)
                .map(|a| Percentiles::of(&members.iter().map(|m| m[a]).collect::<Vec<_>>()))
                .collect();
            ClusterProfile { cluster: c, size: members.len(), marginal }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Action;
    use crate::policy::PolicySource;

    #[test]
    fn two_tight_pairs() {
        let x = vec![vec![0.0, 0.01], vec![0.0, -0.01], vec![10.0, 10.01], vec![10.0, 9.99]];
        let r = kmeans(&x, 2, 1).unwrap();
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[2], r.assignments[3]);
        assert_ne!(r.assignments[0], r.assignments[2]);
        assert!(r.inertia <= 0.01);
    }

    #[test]
    fn k_one_and_k_n() {
        let x = vec![vec![0.0], vec![2.0], vec![4.0]];
        let r = kmeans(&x, 1, 0).unwrap();
        assert_eq!(r.centroids[0], vec![2.0]);
        assert!((r.inertia - 8.0).abs() < 1e-12);
        assert_eq!(kmeans(&x, 3, 0).unwrap().inertia, 0.0);
        assert!(matches!(kmeans(&x, 4, 0), Err(Error::TooFewPoints { points: 3, k: 4 })));
    }

    #[test]
    fn silhouette_hand_value() {
        let x = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        let s = silhouette(&x, &[0, 0, 1, 1]).unwrap();
        // a = 0.1; b = 10.05 for the outer points and 9.95 for the inner ones.
        let expect = ((1.0 - 0.1 / 10.05) + (1.0 - 0.1 / 9.95)) / 2.0;
        assert!((s.mean - expect).abs() < 1e-12);
        assert!((s.mean - 0.990).abs() < 1e-3);
        assert!(matches!(silhouette(&x, &[0, 0, 0, 0]), Err(Error::SingleCluster)));
        let same = silhouette(&[vec![1.0], vec![1.0], vec![1.0], vec![1.0]], &[0, 1, 0, 1]).unwrap();
        assert_eq!(same.mean, 0.0);
    }

    #[test]
    fn marginals() {
        let u = action_marginal(&Policy::uniform(PolicySource::Scripted), Some(&[3.0; N_STATES])).unwrap();
        assert!(u.iter().all(|v| (v - 1.0 / 6.0).abs() < 1e-15));
        let ct = action_marginal(&Policy::deterministic(Action::CreateThread), None).unwrap();
        assert!((ct[Action::CreateThread.index()] - 1.0).abs() < 1e-12);
        assert!(matches!(action_marginal(&Policy::uniform(PolicySource::Scripted), Some(&[0.0; N_STATES])), Err(Error::ZeroWeights)));
    }

    #[test]
    fn rand_index_counts_pairs() {
        assert_eq!(rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        // Agreeing pairs: (0,2), (0,3), (2,3).
        let r = rand_index(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        assert!((r - 3.0 / 6.0).abs() < 1e-15);
    }
}
