//! Seeded rollouts, random-noise corruption and hijacked-account synthesis.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{legal_next_states, Action, Environment, State, Step, Trajectory, N_ACTIONS};
use crate::policy::Policy;
use crate::seed::{self, StreamRng};

fn sample_state<R: Rng + ?Sized>(rng: &mut R, p: &[f64]) -> State {
    State::ALL[seed::categorical(rng, p)]
}

/// Rolls out `len` decision steps, choosing the acting policy per step.
fn rollout_by<'a, F>(env: &Environment, len: usize, rng: &mut StreamRng, user_id: &str, mut policy_at: F) -> Trajectory
where
    F: FnMut(usize) -> &'a Policy,
{
    let mut s = sample_state(rng, env.d0());
    let mut steps = Vec::with_capacity(len);
    for t in 0..len {
        let a = policy_at(t).sample(s, rng);
        steps.push(Step::new(s, a));
        s = sample_state(rng, env.row(s, a));
    }
    Trajectory::new(user_id, steps).with_terminal(s)
}

/// s0 ~ d0, a_t ~ π(·|s_t), s_{t+1} ~ P(·|s_t, a_t). The terminal state is recorded.
pub fn rollout(policy: &Policy, env: &Environment, len: usize, seed: u64) -> Trajectory {
    rollout_named(policy, env, len, &mut seed::rng(seed), "rollout")
}

pub fn rollout_named(policy: &Policy, env: &Environment, len: usize, rng: &mut StreamRng, user_id: &str) -> Trajectory {
    rollout_by(env, len, rng, user_id, |_| policy)
}

/// Number of perturbed indices, ⌊pT⌋. The tiny offset absorbs products such
/// as 0.29 · 100 evaluating just below an integer.
pub fn noise_count(p: f64, len: usize) -> usize {
    ((p * len as f64 + 1e-9).floor() as usize).min(len)
}

/// Replaces the actions at ⌊pT⌋ distinct uniformly chosen steps by uniform
/// draws and resamples each affected successor uniformly among its legal
/// states (and s0 among the initial states when step 0 is hit). Any later link
/// left illegal is re-chained by resampling that successor.
pub fn perturb_noise(traj: &Trajectory, p: f64, seed: u64) -> Result<Trajectory> {
    perturb_noise_with(traj, p, &mut seed::rng(seed))
}

pub fn perturb_noise_with(traj: &Trajectory, p: f64, rng: &mut StreamRng) -> Result<Trajectory> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!("noise fraction {p} outside [0,1]")));
    }
    let mut out = traj.clone();
    let len = out.len();
    let k = noise_count(p, len);
    if k == 0 {
        return Ok(out);
    }
    let mut picked = index::sample(rng, len, k).into_vec();
    picked.sort_unstable();
    for t in picked {
        if t == 0 {
            out.steps[0].state = State::INITIAL[rng.random_range(0..State::INITIAL.len())];
        }
        let a = Action::ALL[rng.random_range(0..N_ACTIONS)];
        out.steps[t].action = a;
        let legal = legal_next_states(out.steps[t].state, a);
        let next = legal[rng.random_range(0..legal.len())];
        set_successor(&mut out, t, next);
    }
    for t in 0..len {
        let (s, a) = (out.steps[t].state, out.steps[t].action);
        let legal = legal_next_states(s, a);
        if let Some(next) = successor(&out, t) {
            if !legal.contains(&next) {
                let repaired = legal[rng.random_range(0..legal.len())];
                set_successor(&mut out, t, repaired);
            }
        }
    }
    Ok(out)
}

fn successor(traj: &Trajectory, t: usize) -> Option<State> {
    traj.steps.get(t + 1).map(|s| s.state).or(if t + 1 == traj.len() { traj.terminal_state } else { None })
}

fn set_successor(traj: &mut Trajectory, t: usize, next: State) {
    if t + 1 < traj.len() {
        traj.steps[t + 1].state = next;
    } else if traj.terminal_state.is_some() {
        traj.terminal_state = Some(next);
    }
}

/// Policy switch from an organic to a troll policy at κ = ⌊ηT⌋.
#[derive(Debug, Clone)]
pub struct HijackSpec {
    pub eta: f64,
    pub len: usize,
    pub organic: Policy,
    pub troll: Policy,
}

pub const DEFAULT_HIJACK_LEN: usize = 100;

impl HijackSpec {
    pub fn new(eta: f64, organic: Policy, troll: Policy) -> Self {
        HijackSpec { eta, len: DEFAULT_HIJACK_LEN, organic, troll }
    }

    pub fn kappa(&self) -> usize {
        hijack_kappa(self.eta, self.len)
    }
}

pub fn hijack_kappa(eta: f64, len: usize) -> usize {
    noise_count(eta, len)
}

pub fn synthesize_hijack(spec: &HijackSpec, env: &Environment, seed: u64) -> Result<Trajectory> {
    synthesize_hijack_with(spec, env, &mut seed::rng(seed), "hijack")
}

pub fn synthesize_hijack_with(spec: &HijackSpec, env: &Environment, rng: &mut StreamRng, user_id: &str) -> Result<Trajectory> {
    if !(0.0..=1.0).contains(&spec.eta) || spec.len == 0 {
        return Err(Error::InvalidConfig(format!("hijack needs eta in [0,1] and T >= 1, got {} and {}", spec.eta, spec.len)));
    }
    let kappa = spec.kappa();
    Ok(rollout_by(env, spec.len, rng, user_id, |t| if t < kappa { &spec.organic } else { &spec.troll }))
}

/// Per-user, per-action content embeddings of a common dimension.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EmbeddingPool {
    dim: usize,
    pools: BTreeMap<String, [Vec<Vec<f64>>; N_ACTIONS]>,
}

impl EmbeddingPool {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingPool { dim, pools: BTreeMap::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert(&mut self, user: &str, action: Action, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: vector.len() });
        }
        self.pools.entry(user.to_string()).or_default()[action.index()].push(vector);
        Ok(())
    }

    pub fn get(&self, user: &str, action: Action) -> &[Vec<f64>] {
        self.pools.get(user).map(|p| p[action.index()].as_slice()).unwrap_or(&[])
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.pools.keys().map(String::as_str)
    }

    pub fn contains_user(&self, user: &str) -> bool {
        self.pools.contains_key(user)
    }

    /// Merges another pool of the same dimension; its users replace ours.
    pub fn extend(&mut self, other: EmbeddingPool) -> Result<()> {
        if other.dim != self.dim && !other.pools.is_empty() {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        self.pools.extend(other.pools);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Action, &Vec<f64>)> {
        self.pools.iter().flat_map(|(u, per)| {
            Action::ALL.into_iter().flat_map(move |a| per[a.index()].iter().map(move |v| (u.as_str(), a, v)))
        })
    }
}

/// A user's slice of a pool.
#[derive(Debug, Clone, Copy)]
pub struct ContentOwner<'a> {
    pub pool: &'a EmbeddingPool,
    pub user: &'a str,
}

/// One vector per step, drawn uniformly from the owner's pool for that step's
/// action. Steps before `kappa` belong to `organic`, the rest to `troll`.
pub fn sample_content_sequence(
    traj: &Trajectory,
    organic: ContentOwner<'_>,
    troll: ContentOwner<'_>,
    kappa: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    sample_content_sequence_with(traj, organic, troll, kappa, &mut seed::rng(seed))
}

pub fn sample_content_sequence_with(
    traj: &Trajectory,
    organic: ContentOwner<'_>,
    troll: ContentOwner<'_>,
    kappa: usize,
    rng: &mut StreamRng,
) -> Result<Vec<Vec<f64>>> {
    traj.steps
        .iter()
        .enumerate()
        .map(|(t, step)| {
            let owner = if t < kappa { organic } else { troll };
            let pool = owner.pool.get(owner.user, step.action);
            if pool.is_empty() {
                return Err(Error::MissingPool { user: owner.user.to_string(), action: step.action });
            }
            Ok(pool[rng.random_range(0..pool.len())].clone())
        })
        .collect()
}

pub fn mean_embedding(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(Error::EmptyList)?;
    let mut mean = vec![0.0; first.len()];
    for v in vectors {
        if v.len() != mean.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), got: v.len() });
        }
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    let n = vectors.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Stance;
    use crate::policy::PolicySource;

    fn it_env() -> Environment {
        Environment::default().with_initial_state(State::InitialThread).unwrap()
    }

    #[test]
    fn rollout_examples() {
        let t = rollout(&Policy::deterministic(Action::CreateThread), &it_env(), 3, 1);
        assert_eq!(t.steps, vec![Step::new(State::InitialThread, Action::CreateThread); 3]);

        let p = Policy::uniform(PolicySource::Scripted);
        assert_eq!(rollout(&p, &Environment::default(), 50, 9), rollout(&p, &Environment::default(), 50, 9));

        let mut d0 = [0.0; 12];
        d0[0] = 1.0;
        let env = Environment::new(d0, [1.0, 0.0, 0.0], 0.9).unwrap();
        let t = rollout(&Policy::deterministic(Action::WaitReply), &env, 2, 3);
        let gr = State::GetReply(Stance::Agree);
        assert_eq!(t.steps, vec![Step::new(State::InitialThread, Action::WaitReply), Step::new(gr, Action::WaitReply)]);
        assert_eq!(t.terminal_state, Some(gr));
        assert!(t.validate().is_ok());
    }

    #[test]
    fn noise_counts_and_identity() {
        let p = Policy::uniform(PolicySource::Scripted);
        let t = rollout(&p, &Environment::default(), 7, 2);
        assert_eq!(perturb_noise(&t, 0.0, 5).unwrap(), t);
        assert_eq!(noise_count(0.5, 7), 3);
        assert_eq!(noise_count(0.29, 100), 29);
        let noisy = perturb_noise(&t, 1.0, 5).unwrap();
        assert_eq!(noisy.len(), 7);
        assert!(noisy.validate().is_ok());
        assert!(perturb_noise(&t, 1.5, 5).is_err());
    }

    #[test]
    fn hijack_switch_point() {
        let organic = Policy::deterministic(Action::Reply(Stance::Agree));
        let troll = Policy::deterministic(Action::CreateThread);
        let spec = HijackSpec::new(0.1, organic.clone(), troll.clone());
        assert_eq!(spec.kappa(), 10);
        let t = synthesize_hijack(&spec, &Environment::default(), 4).unwrap();
        assert!(t.steps[..10].iter().all(|s| s.action == Action::Reply(Stance::Agree)));
        assert!(t.steps[10..].iter().all(|s| s.action == Action::CreateThread));
        assert!(t.validate().is_ok());
        let pure_troll = synthesize_hijack(&HijackSpec::new(0.0, organic.clone(), troll.clone()), &Environment::default(), 4).unwrap();
        assert!(pure_troll.steps.iter().all(|s| s.action == Action::CreateThread));
        let pure_org = synthesize_hijack(&HijackSpec::new(1.0, organic, troll), &Environment::default(), 4).unwrap();
        assert!(pure_org.steps.iter().all(|s| s.action == Action::Reply(Stance::Agree)));
    }

    #[test]
    fn content_sequence_ownership() {
        let mut org = EmbeddingPool::new(1).unwrap();
        let mut tro = EmbeddingPool::new(1).unwrap();
        for a in Action::ALL {
            org.insert("o", a, vec![0.0]).unwrap();
            tro.insert("t", a, vec![1.0]).unwrap();
        }
        let t = rollout(&Policy::uniform(PolicySource::Scripted), &Environment::default(), 100, 1);
        let o = ContentOwner { pool: &org, user: "o" };
        let r = ContentOwner { pool: &tro, user: "t" };
        let seq = sample_content_sequence(&t, o, r, 50, 2).unwrap();
        assert!(seq[..50].iter().all(|v| v[0] == 0.0));
        assert!(seq[50..].iter().all(|v| v[0] == 1.0));
        assert_eq!(sample_content_sequence(&t, o, r, 100, 2).unwrap(), vec![vec![0.0]; 100]);
        let empty = EmbeddingPool::new(1).unwrap();
        let missing = ContentOwner { pool: &empty, user: "x" };
        assert!(matches!(sample_content_sequence(&t, missing, r, 100, 2), Err(Error::MissingPool { .. })));
    }

    #[test]
    fn mean_embedding_examples() {
        assert_eq!(mean_embedding(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(), vec![2.0, 3.0]);
        assert_eq!(mean_embedding(&[vec![0.5, -1.0]]).unwrap(), vec![0.5, -1.0]);
        assert_eq!(mean_embedding(&vec![vec![0.25, 4.0]; 7]).unwrap(), vec![0.25, 4.0]);
        assert!(matches!(mean_embedding(&[]), Err(Error::EmptyList)));
        assert!(matches!(mean_embedding(&[vec![1.0], vec![1.0, 2.0]]), Err(Error::DimensionMismatch { .. })));
    }
}
