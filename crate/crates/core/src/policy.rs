//! Policies and the empirical state-action estimators.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, State, Trajectory, N_ACTIONS, N_STATES};
use crate::seed;

pub const N_FEATURES: usize = N_STATES * N_ACTIONS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySource {
    Empirical,
    MaxentIrl,
    Gail,
    Scripted,
}

impl PolicySource {
    pub fn name(self) -> &'static str {
        match self {
            PolicySource::Empirical => "empirical",
            PolicySource::MaxentIrl => "maxent_irl",
            PolicySource::Gail => "gail",
            PolicySource::Scripted => "scripted",
        }
    }
}

impl fmt::Display for PolicySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(PolicySource::Empirical),
            "maxent_irl" => Ok(PolicySource::MaxentIrl),
            "gail" => Ok(PolicySource::Gail),
            "scripted" => Ok(PolicySource::Scripted),
            other => Err(Error::UnknownName(other.to_string())),
        }
    }
}

/// Row-stochastic 12x6 matrix, `pi[s][a] = π(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub pi: [[f64; N_ACTIONS]; N_STATES],
    pub source: PolicySource,
}

impl Policy {
    pub fn uniform(source: PolicySource) -> Self {
        Policy { pi: [[1.0 / N_ACTIONS as f64; N_ACTIONS]; N_STATES], source }
    }

    /// The same action distribution in every state.
    pub fn constant(row: [f64; N_ACTIONS], source: PolicySource) -> Result<Self> {
        Self::from_rows([row; N_STATES], source)
    }

    pub fn deterministic(action: Action) -> Self {
        let mut row = [0.0; N_ACTIONS];
        row[action.index()] = 1.0;
        Policy { pi: [row; N_STATES], source: PolicySource::Scripted }
    }

    pub fn from_rows(pi: [[f64; N_ACTIONS]; N_STATES], source: PolicySource) -> Result<Self> {
        let p = Policy { pi, source };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        for (s, row) in self.pi.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "policy row {} is not a distribution",
                    State::ALL[s]
                )));
            }
        }
        Ok(())
    }

    pub fn prob(&self, s: State, a: Action) -> f64 {
        self.pi[s.index()][a.index()]
    }

    pub fn row(&self, s: State) -> &[f64; N_ACTIONS] {
        &self.pi[s.index()]
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: State, rng: &mut R) -> Action {
        Action::ALL[seed::categorical(rng, self.row(s))]
    }

    /// Row-major flattening: state order, then action order.
    pub fn flatten(&self) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        for (s, row) in self.pi.iter().enumerate() {
            out[s * N_ACTIONS..(s + 1) * N_ACTIONS].copy_from_slice(row);
        }
        out
    }

    pub fn from_flat(values: &[f64], source: PolicySource) -> Result<Self> {
        if values.len() != N_FEATURES {
            return Err(Error::DimensionMismatch { expected: N_FEATURES, got: values.len() });
        }
        let mut pi = [[0.0; N_ACTIONS]; N_STATES];
        for (s, row) in pi.iter_mut().enumerate() {
            row.copy_from_slice(&values[s * N_ACTIONS..(s + 1) * N_ACTIONS]);
        }
        Self::from_rows(pi, source)
    }
}

/// Empirical state-action visitation frequencies ρ̂(s,a).
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationMatrix {
    pub rho: [[f64; N_ACTIONS]; N_STATES],
}

impl VisitationMatrix {
    pub fn get(&self, s: State, a: Action) -> f64 {
        self.rho[s.index()][a.index()]
    }

    pub fn total(&self) -> f64 {
        self.rho.iter().flatten().sum()
    }

    /// Marginal state frequencies Σ_a ρ̂(s,a).
    pub fn state_marginal(&self) -> [f64; N_STATES] {
        let mut m = [0.0; N_STATES];
        for (s, row) in self.rho.iter().enumerate() {
            m[s] = row.iter().sum();
        }
        m
    }
}

fn counts(traj: &Trajectory) -> [[u64; N_ACTIONS]; N_STATES] {
    let mut c = [[0u64; N_ACTIONS]; N_STATES];
    for step in &traj.steps {
        c[step.state.index()][step.action.index()] += 1;
    }
    c
}

pub fn visitation_frequency(traj: &Trajectory) -> Result<VisitationMatrix> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let c = counts(traj);
    let t = traj.len() as f64;
    let mut rho = [[0.0; N_ACTIONS]; N_STATES];
    for (r, cr) in rho.iter_mut().zip(&c) {
        for (x, n) in r.iter_mut().zip(cr) {
            *x = *n as f64 / t;
        }
    }
    Ok(VisitationMatrix { rho })
}

/// Normalized visitation counts per state. Unvisited rows become uniform;
/// `smoothing` adds a pseudo-count to every cell of visited rows.
pub fn empirical_policy_smoothed(traj: &Trajectory, smoothing: f64) -> Result<Policy> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let c = counts(traj);
    let mut pi = [[1.0 / N_ACTIONS as f64; N_ACTIONS]; N_STATES];
    for (row, cr) in pi.iter_mut().zip(&c) {
        let n: u64 = cr.iter().sum();
        if n == 0 {
            continue;
        }
        let denom = n as f64 + smoothing * N_ACTIONS as f64;
        for (p, k) in row.iter_mut().zip(cr) {
            *p = (*k as f64 + smoothing) / denom;
        }
    }
    Ok(Policy { pi, source: PolicySource::Empirical })
}

pub fn empirical_policy(traj: &Trajectory) -> Result<Policy> {
    empirical_policy_smoothed(traj, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Stance, State::*, Action::*};

    fn sample_traj() -> Trajectory {
        Trajectory::from_pairs(
            "u",
            &[
                (InitialThread, WaitReply),
                (GetReply(Stance::Agree), Reply(Stance::Agree)),
                (EngagedReply(Stance::Agree), WaitReply),
            ],
        )
    }

    #[test]
    fn visitation_hand_count() {
        let v = visitation_frequency(&sample_traj()).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(v.get(InitialThread, WaitReply), third);
        assert_eq!(v.get(GetReply(Stance::Agree), Reply(Stance::Agree)), third);
        assert_eq!(v.get(EngagedReply(Stance::Agree), WaitReply), third);
        assert!((v.total() - 1.0).abs() < 1e-12);
        let nonzero = v.rho.iter().flatten().filter(|x| **x > 0.0).count();
        assert_eq!(nonzero, 3);

        let single = Trajectory::from_pairs("u", &[(InitialThread, CreateThread), (InitialThread, CreateThread)]);
        assert_eq!(visitation_frequency(&single).unwrap().get(InitialThread, CreateThread), 1.0);
    }

    #[test]
    fn empirical_policy_examples() {
        let p = empirical_policy(&sample_traj()).unwrap();
        assert_eq!(p.prob(InitialThread, WaitReply), 1.0);
        assert_eq!(p.prob(GetReply(Stance::Agree), Reply(Stance::Agree)), 1.0);
        assert_eq!(p.prob(EngagedReply(Stance::Agree), WaitReply), 1.0);
        let uniform_rows = p.pi.iter().filter(|r| r.iter().all(|x| *x == 1.0 / 6.0)).count();
        assert_eq!(uniform_rows, 9);

        let t = Trajectory::from_pairs(
            "u",
            &[(InitialThread, CreateThread), (InitialThread, RootComment), (InitialThread, CreateThread), (InitialThread, CreateThread)],
        );
        let p = empirical_policy(&t).unwrap();
        assert_eq!(p.row(InitialThread), &[0.0, 0.75, 0.25, 0.0, 0.0, 0.0]);
        p.check().unwrap();
    }

    #[test]
    fn empty_trajectory_rejected() {
        let t = Trajectory::new("u", vec![]);
        assert!(matches!(visitation_frequency(&t), Err(Error::EmptyTrajectory)));
        assert!(matches!(empirical_policy(&t), Err(Error::EmptyTrajectory)));
    }

    #[test]
    fn smoothing_spreads_visited_rows_only() {
        let p = empirical_policy_smoothed(&sample_traj(), 1.0).unwrap();
        assert!((p.prob(InitialThread, WaitReply) - 2.0 / 7.0).abs() < 1e-12);
        assert_eq!(p.prob(EngagedRootComment, WaitReply), 1.0 / 6.0);
    }

    #[test]
    fn flatten_round_trip() {
        let p = empirical_policy(&sample_traj()).unwrap();
        let back = Policy::from_flat(&p.flatten(), PolicySource::Empirical).unwrap();
        assert_eq!(back, p);
        assert!(Policy::from_flat(&[0.0; 5], PolicySource::Empirical).is_err());
    }
}
