//! Maximum-entropy deep inverse reinforcement learning on the known MDP.
//!
//! A small reward network r_θ: S → R is trained so that the soft-optimal policy
//! under r_θ reproduces the expert's discounted state visitation. The inner
//! problem is solved exactly by soft value iteration and forward dynamic
//! programming, so the gradient is Σ_s (μ_E(s) − μ_π(s)) ∇_θ r_θ(s).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, Environment, State, Trajectory, N_ACTIONS, N_STATES};
use crate::nn::{one_hot, Activation, Adam, Mlp};
use crate::policy::{Policy, PolicySource};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaxEntConfig {
    pub alpha: f64,
    pub epochs: usize,
    pub gamma: f64,
    /// Max-norm stopping threshold of soft value iteration.
    pub epsilon: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub temperature: f64,
    /// Horizon of the learner's visitation measure; `None` matches the expert.
    pub horizon: Option<usize>,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub init_sigma: f64,
    pub max_iterations: usize,
}

impl Default for MaxEntConfig {
    fn default() -> Self {
        MaxEntConfig {
            alpha: 0.01,
            epochs: 500,
            gamma: 0.9,
            epsilon: 0.01,
            lambda1: 0.0,
            lambda2: 0.0,
            temperature: 1.0,
            horizon: None,
            seed: 0,
            hidden: vec![3, 3],
            init_sigma: 0.1,
            max_iterations: 10_000,
        }
    }
}

impl MaxEntConfig {
    pub fn check(&self) -> Result<()> {
        let ok = self.alpha >= 0.0
            && self.gamma > 0.0
            && self.gamma < 1.0
            && self.epsilon > 0.0
            && self.lambda1 >= 0.0
            && self.lambda2 >= 0.0
            && self.temperature > 0.0
            && self.init_sigma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("maxent config out of range: {self:?}")))
        }
    }
}

/// Per-state reward network over one-hot state encodings.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardNet {
    pub net: Mlp,
}

impl RewardNet {
    pub fn zeros(hidden: &[usize]) -> Self {
        RewardNet { net: Mlp::zeros(&Self::layout(hidden), Activation::Tanh, Activation::Identity) }
    }

    pub fn init(hidden: &[usize], sigma: f64, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        RewardNet {
            net: Mlp::normal(&Self::layout(hidden), Activation::Tanh, Activation::Identity, sigma, &mut rng),
        }
    }

    fn layout(hidden: &[usize]) -> Vec<usize> {
        let mut sizes = vec![N_STATES];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        sizes
    }

    pub fn reward(&self, s: State) -> f64 {
        self.net.forward(&one_hot(s.index(), N_STATES))[0]
    }

    pub fn rewards(&self) -> [f64; N_STATES] {
        let mut r = [0.0; N_STATES];
        for s in State::ALL {
            r[s.index()] = self.reward(s);
        }
        r
    }

    /// Σ_s w(s) ∇_θ r_θ(s).
    pub fn weighted_gradient(&self, weights: &[f64; N_STATES]) -> Vec<f64> {
        let mut grad = vec![0.0; self.net.n_params()];
        for s in State::ALL {
            let w = weights[s.index()];
            if w != 0.0 {
                let trace = self.net.forward_trace(&one_hot(s.index(), N_STATES));
                self.net.backward(&trace, &[w], &mut grad);
            }
        }
        grad
    }

    /// Textual checkpoint: a `layers` header with the layer sizes, then one
    /// weight per line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("layers");
        for s in self.net.sizes() {
            write!(out, " {s}").expect("write to string");
        }
        out.push('\n');
        for p in &self.net.params {
            writeln!(out, "{p:e}").expect("write to string");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse { line: 1, message: "missing header".into() })?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("layers") {
            return Err(Error::Parse { line: 1, message: "expected `layers` header".into() });
        }
        let sizes: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| Error::Parse { line: 1, message: format!("bad size `{p}`") }))
            .collect::<Result<_>>()?;
        if sizes.len() < 2 || sizes[0] != N_STATES || sizes[sizes.len() - 1] != 1 {
            return Err(Error::Parse { line: 1, message: "layout must run from 12 inputs to 1 output".into() });
        }
        let mut net = Mlp::zeros(&sizes, Activation::Tanh, Activation::Identity);
        let params: Vec<f64> = lines
            .enumerate()
            .map(|(i, l)| {
                l.trim().parse().map_err(|_| Error::Parse { line: i + 2, message: format!("bad weight `{l}`") })
            })
            .collect::<Result<_>>()?;
        if params.len() != net.n_params() {
            return Err(Error::DimensionMismatch { expected: net.n_params(), got: params.len() });
        }
        net.params = params;
        Ok(RewardNet { net })
    }
}

pub fn reward_forward(net: &RewardNet, s: State) -> f64 {
    net.reward(s)
}

/// Discounted state visitation measure μ(s).
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationMeasure {
    pub mu: [f64; N_STATES],
}

impl VisitationMeasure {
    pub fn total(&self) -> f64 {
        self.mu.iter().sum()
    }

    pub fn normalized(&self) -> [f64; N_STATES] {
        let t = self.total();
        let mut out = self.mu;
        if t > 0.0 {
            out.iter_mut().for_each(|x| *x /= t);
        }
        out
    }

    /// L1 distance between the normalized measures.
    pub fn normalized_l1(&self, other: &VisitationMeasure) -> f64 {
        self.normalized().iter().zip(other.normalized()).map(|(a, b)| (a - b).abs()).sum()
    }

    pub fn get(&self, s: State) -> f64 {
        self.mu[s.index()]
    }
}

#[derive(Debug, Clone)]
pub struct SoftValues {
    pub policy: Policy,
    pub values: [f64; N_STATES],
    pub q: [[f64; N_ACTIONS]; N_STATES],
    pub iterations: usize,
}

fn soft_backup(
    values: &[f64; N_STATES],
    reward: &[f64; N_STATES],
    env: &Environment,
    gamma: f64,
    temperature: f64,
) -> ([[f64; N_ACTIONS]; N_STATES], [f64; N_STATES]) {
    let mut q = [[0.0; N_ACTIONS]; N_STATES];
    let mut v = [0.0; N_STATES];
    for s in State::ALL {
        let i = s.index();
        for a in Action::ALL {
            q[i][a.index()] = reward[i] + gamma * env.expect(s, a, values);
        }
        v[i] = log_sum_exp(&q[i], temperature);
    }
    (q, v)
}

fn log_sum_exp(q: &[f64; N_ACTIONS], temperature: f64) -> f64 {
    let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + temperature * q.iter().map(|x| ((x - m) / temperature).exp()).sum::<f64>().ln()
}

fn softmax_row(q: &[f64; N_ACTIONS], temperature: f64) -> [f64; N_ACTIONS] {
    let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut row = [0.0; N_ACTIONS];
    for (p, x) in row.iter_mut().zip(q) {
        *p = ((x - m) / temperature).exp();
    }
    let z: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= z);
    row
}

/// Soft value iteration with an optional warm start. Stops once successive
/// value functions differ by less than `epsilon` in max norm.
pub fn soft_value_iteration_from(
    reward: &[f64; N_STATES],
    env: &Environment,
    gamma: f64,
    temperature: f64,
    epsilon: f64,
    max_iterations: usize,
    warm_start: Option<&[f64; N_STATES]>,
) -> Result<SoftValues> {
    // Written negated so NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(temperature > 0.0) || !(epsilon > 0.0) {
        return Err(Error::InvalidConfig("temperature and epsilon must be positive".into()));
    }
    if reward.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("soft value iteration reward".into()));
    }
    let mut values = warm_start.copied().unwrap_or([0.0; N_STATES]);
    for it in 1..=max_iterations {
        let (_, next) = soft_backup(&values, reward, env, gamma, temperature);
        let change = next.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        values = next;
        if change < epsilon {
            let (q, _) = soft_backup(&values, reward, env, gamma, temperature);
            let mut pi = [[0.0; N_ACTIONS]; N_STATES];
            for (row, qs) in pi.iter_mut().zip(&q) {
                *row = softmax_row(qs, temperature);
            }
            let policy = Policy { pi, source: PolicySource::MaxentIrl };
            return Ok(SoftValues { policy, values, q, iterations: it });
        }
    }
    Err(Error::NonConvergence { iterations: max_iterations })
}

pub fn soft_value_iteration(reward: &[f64; N_STATES], env: &Environment, cfg: &MaxEntConfig) -> Result<Policy> {
    soft_value_iteration_from(reward, env, cfg.gamma, cfg.temperature, cfg.epsilon, cfg.max_iterations, None)
        .map(|sv| sv.policy)
}

/// Max-norm residual of the softmax Bellman equation at `values`.
pub fn soft_bellman_residual(
    values: &[f64; N_STATES],
    reward: &[f64; N_STATES],
    env: &Environment,
    gamma: f64,
    temperature: f64,
) -> f64 {
    let (_, next) = soft_backup(values, reward, env, gamma, temperature);
    next.iter().zip(values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// μ = Σ_{t=0..H} γ^t d_t with d_0 = env.d0 and the policy-induced forward chain.
pub fn expected_state_visitation(policy: &Policy, env: &Environment, horizon: usize) -> VisitationMeasure {
    let gamma = env.gamma;
    let mut d = *env.d0();
    let mut mu = d;
    let mut discount = 1.0;
    for _ in 0..horizon {
        discount *= gamma;
        // Remaining terms cannot move the sum by more than 1e-14.
        if discount < 1e-14 * (1.0 - gamma) {
            break;
        }
        let mut next = [0.0; N_STATES];
        for s in State::ALL {
            let ds = d[s.index()];
            if ds == 0.0 {
                continue;
            }
            for a in Action::ALL {
                let w = ds * policy.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for (n, p) in next.iter_mut().zip(env.row(s, a)) {
                    *n += w * p;
                }
            }
        }
        for (m, x) in mu.iter_mut().zip(&next) {
            *m += discount * x;
        }
        d = next;
    }
    VisitationMeasure { mu }
}

/// μ_E(s) = Σ_t γ^t 1{s_t = s} over the observed states, terminal included.
pub fn expert_visitation(traj: &Trajectory, gamma: f64) -> Result<VisitationMeasure> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let mut mu = [0.0; N_STATES];
    let mut discount = 1.0;
    for s in traj.states() {
        mu[s.index()] += discount;
        discount *= gamma;
    }
    Ok(VisitationMeasure { mu })
}

/// Number of transitions covered by the expert measure.
pub fn expert_horizon(traj: &Trajectory) -> usize {
    traj.states().count().saturating_sub(1)
}

/// ⟨μ_E, r⟩ − Σ_s d0(s) V_soft(s): the unregularized objective whose gradient is
/// Σ_s (μ_E − μ_π)(s) ∇r(s) for the infinite-horizon soft-optimal π.
pub fn data_objective(
    net: &RewardNet,
    expert: &VisitationMeasure,
    env: &Environment,
    temperature: f64,
    epsilon: f64,
) -> Result<f64> {
    let r = net.rewards();
    let sv = soft_value_iteration_from(&r, env, env.gamma, temperature, epsilon, 1_000_000, None)?;
    let start: f64 = env.d0().iter().zip(&sv.values).map(|(d, v)| d * v).sum();
    Ok(expert.mu.iter().zip(&r).map(|(m, x)| m * x).sum::<f64>() - start)
}

pub fn data_gradient(net: &RewardNet, expert: &VisitationMeasure, learner: &VisitationMeasure) -> Vec<f64> {
    let mut diff = [0.0; N_STATES];
    for (d, (e, l)) in diff.iter_mut().zip(expert.mu.iter().zip(&learner.mu)) {
        *d = e - l;
    }
    net.weighted_gradient(&diff)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub data_term: f64,
    pub grad_norm: f64,
    pub visitation_l1: f64,
}

#[derive(Debug, Clone)]
pub struct IrlOutcome {
    pub reward: RewardNet,
    pub policy: Policy,
    pub history: Vec<EpochStats>,
}

/// Trains a reward network on one demonstration and returns it with its
/// soft-optimal policy. The environment is used with `cfg.gamma`.
pub fn train_maxent_irl(traj: &Trajectory, env: &Environment, cfg: &MaxEntConfig) -> Result<IrlOutcome> {
    cfg.check()?;
    let env = env.with_gamma(cfg.gamma)?;
    let expert = expert_visitation(traj, cfg.gamma)?;
    let horizon = cfg.horizon.unwrap_or_else(|| expert_horizon(traj));
    let mut reward = RewardNet::init(&cfg.hidden, cfg.init_sigma, cfg.seed);
    let mut opt = Adam::new(reward.net.n_params());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut warm: Option<[f64; N_STATES]> = None;

    for _ in 0..cfg.epochs {
        let r = reward.rewards();
        let sv = soft_value_iteration_from(
            &r, &env, cfg.gamma, cfg.temperature, cfg.epsilon, cfg.max_iterations, warm.as_ref(),
        )?;
        warm = Some(sv.values);
        let learner = expected_state_visitation(&sv.policy, &env, horizon);
        let mut grad = data_gradient(&reward, &expert, &learner);
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let data_term: f64 =
            expert.mu.iter().zip(&learner.mu).zip(&r).map(|((e, l), x)| (e - l) * x).sum();
        history.push(EpochStats { data_term, grad_norm, visitation_l1: expert.normalized_l1(&learner) });

        // Ascent on data − Ψ, expressed as descent on its negation.
        for (g, p) in grad.iter_mut().zip(&reward.net.params) {
            *g = -(*g - cfg.lambda1 * p.signum() * f64::from(u8::from(*p != 0.0)) - 2.0 * cfg.lambda2 * p);
        }
        opt.step(&mut reward.net.params, &grad, cfg.alpha);
        if reward.net.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("maxent irl weights".into()));
        }
    }

    let sv = soft_value_iteration_from(
        &reward.rewards(), &env, cfg.gamma, cfg.temperature, cfg.epsilon, cfg.max_iterations, warm.as_ref(),
    )?;
    Ok(IrlOutcome { reward, policy: sv.policy, history })
}
