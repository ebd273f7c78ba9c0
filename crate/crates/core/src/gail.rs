//! Adversarial imitation on the discrete MDP.
//!
//! A discriminator D(s,a) separates expert pairs from generator pairs; the
//! generator is trained by policy gradient on the surrogate reward
//! −log(1 − D(s,a)) with an entropy bonus and a learned value baseline.
//!
//! Inputs are one-hot, so every minibatch collapses onto at most 72 distinct
//! pairs and the networks are evaluated once per distinct pair.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irl::expected_state_visitation;
use crate::mdp::{Action, Environment, State, Trajectory, N_ACTIONS, N_STATES};
use crate::nn::{one_hot, Activation, Adam, Mlp, Trace};
use crate::policy::{Policy, PolicySource, N_FEATURES};
use crate::seed::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// One logit per state-action pair.
    Tabular,
    /// Actor and critic networks with hidden layers of 16 and 16 units.
    Mlp,
}

/// How the policy gradient scores actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Likelihood-ratio gradient on the sampled action with GAE advantages.
    Sampled,
    /// Every action at each visited state is scored by its one-step
    /// advantage r̃(s,a) + γ E[V(s')] − V(s) under the known dynamics.
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TabularOptimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GailConfig {
    pub learning_rate: f64,
    /// Multiplier on `learning_rate` for the tabular logits and value table.
    pub tabular_lr_scale: f64,
    pub batch_size: usize,
    pub n_steps: usize,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub hidden_dim: usize,
    pub disc_updates_per_round: usize,
    pub policy_epochs: usize,
    pub total_steps: usize,
    pub running_norm: bool,
    pub generator: GeneratorKind,
    pub estimator: Estimator,
    pub tabular_optimizer: TabularOptimizer,
    /// Fraction of final rounds whose generator policies are averaged into
    /// the returned policy. 0 returns the last iterate.
    pub average_fraction: f64,
    /// Divide advantages by their batch standard deviation.
    pub normalize_advantages: bool,
    /// Step size of the tabular value-baseline regression, in (0, 1].
    pub value_step: f64,
    /// Generator episodes restart from d0 after this many steps; `None` uses
    /// the expert trajectory length.
    pub episode_len: Option<usize>,
    pub seed: u64,
}

impl Default for GailConfig {
    fn default() -> Self {
        GailConfig {
            learning_rate: 3e-4,
            tabular_lr_scale: 30.0,
            batch_size: 64,
            n_steps: 128,
            entropy_coef: 0.01,
            gamma: 0.99,
            gae_lambda: 0.95,
            hidden_dim: 16,
            disc_updates_per_round: 5,
            policy_epochs: 4,
            total_steps: 20_000,
            running_norm: false,
            generator: GeneratorKind::Tabular,
            estimator: Estimator::Sampled,
            tabular_optimizer: TabularOptimizer::Adam,
            normalize_advantages: true,
            average_fraction: 0.5,
            value_step: 0.5,
            episode_len: None,
            seed: 0,
        }
    }
}

impl GailConfig {
    pub fn check(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.tabular_lr_scale >= 0.0
            && self.batch_size > 0
            && self.n_steps > 0
            && self.entropy_coef >= 0.0
            && self.gamma > 0.0
            && self.gamma < 1.0
            && (0.0..=1.0).contains(&self.gae_lambda)
            && self.hidden_dim > 0
            && self.policy_epochs > 0
            && self.value_step > 0.0
            && self.value_step <= 1.0
            && (0.0..=1.0).contains(&self.average_fraction)
            && self.episode_len != Some(0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("gail config out of range: {self:?}")))
        }
    }
}

/// ρ(s,a) = μ(s)·π(a|s).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    pub rho: [[f64; N_ACTIONS]; N_STATES],
}

impl OccupancyMeasure {
    pub fn total(&self) -> f64 {
        self.rho.iter().flatten().sum()
    }

    pub fn normalized(&self) -> [[f64; N_ACTIONS]; N_STATES] {
        let t = self.total();
        let mut out = self.rho;
        if t > 0.0 {
            out.iter_mut().flatten().for_each(|x| *x /= t);
        }
        out
    }

    pub fn normalized_l1(&self, other: &OccupancyMeasure) -> f64 {
        let (a, b) = (self.normalized(), other.normalized());
        a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).sum()
    }

    pub fn state_marginal(&self) -> [f64; N_STATES] {
        let mut m = [0.0; N_STATES];
        for (x, row) in m.iter_mut().zip(&self.rho) {
            *x = row.iter().sum();
        }
        m
    }
}

pub fn occupancy_measure(policy: &Policy, env: &Environment, gamma: f64, horizon: usize) -> Result<OccupancyMeasure> {
    let env = env.with_gamma(gamma)?;
    let mu = expected_state_visitation(policy, &env, horizon);
    let mut rho = [[0.0; N_ACTIONS]; N_STATES];
    for (s, row) in rho.iter_mut().enumerate() {
        for (a, x) in row.iter_mut().enumerate() {
            *x = mu.mu[s] * policy.pi[s][a];
        }
    }
    Ok(OccupancyMeasure { rho })
}

fn pair(s: State, a: Action) -> usize {
    s.index() * N_ACTIONS + a.index()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Two-stream discriminator: state and action embeddings are concatenated and
/// passed through a one-hidden-layer head with a sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub obs: Mlp,
    pub act: Mlp,
    pub head: Mlp,
}

struct DiscTrace {
    obs: Trace,
    act: Trace,
    head: Trace,
}

impl Discriminator {
    pub fn zeros(hidden: usize) -> Self {
        Discriminator {
            obs: Mlp::zeros(&[N_STATES, hidden], Activation::Tanh, Activation::Tanh),
            act: Mlp::zeros(&[N_ACTIONS, hidden], Activation::Tanh, Activation::Tanh),
            head: Mlp::zeros(&[2 * hidden, hidden, 1], Activation::Tanh, Activation::Identity),
        }
    }

    pub fn init(hidden: usize, rng: &mut StreamRng) -> Self {
        let head_sigma = 1.0 / ((2 * hidden) as f64).sqrt();
        Discriminator {
            obs: Mlp::normal(&[N_STATES, hidden], Activation::Tanh, Activation::Tanh, 0.5, rng),
            act: Mlp::normal(&[N_ACTIONS, hidden], Activation::Tanh, Activation::Tanh, 0.5, rng),
            head: Mlp::normal(&[2 * hidden, hidden, 1], Activation::Tanh, Activation::Identity, head_sigma, rng),
        }
    }

    fn trace(&self, s: State, a: Action) -> DiscTrace {
        let obs = self.obs.forward_trace(&one_hot(s.index(), N_STATES));
        let act = self.act.forward_trace(&one_hot(a.index(), N_ACTIONS));
        let joint: Vec<f64> = obs.output().iter().chain(act.output()).copied().collect();
        let head = self.head.forward_trace(&joint);
        DiscTrace { obs, act, head }
    }

    pub fn logit(&self, s: State, a: Action) -> f64 {
        self.trace(s, a).head.output()[0]
    }

    /// Probability that (s, a) came from the expert.
    pub fn forward(&self, s: State, a: Action) -> f64 {
        sigmoid(self.logit(s, a))
    }

    /// D over all 72 pairs in state-major order.
    pub fn table(&self) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        for s in State::ALL {
            for a in Action::ALL {
                out[pair(s, a)] = self.forward(s, a);
            }
        }
        out
    }

    /// Mean binary cross-entropy and its parameter gradients for pair weights
    /// `expert` (label 1) and `generator` (label 0), each normalized to sum 1.
    fn bce_grad(&self, expert: &[f64; N_FEATURES], generator: &[f64; N_FEATURES]) -> (f64, [Vec<f64>; 3]) {
        let mut g = [vec![0.0; self.obs.n_params()], vec![0.0; self.act.n_params()], vec![0.0; self.head.n_params()]];
        let mut loss = 0.0;
        for s in State::ALL {
            for a in Action::ALL {
                let (we, wg) = (expert[pair(s, a)], generator[pair(s, a)]);
                if we == 0.0 && wg == 0.0 {
                    continue;
                }
                let tr = self.trace(s, a);
                let d = sigmoid(tr.head.output()[0]).clamp(1e-12, 1.0 - 1e-12);
                loss -= 0.5 * (we * d.ln() + wg * (1.0 - d).ln());
                let dlogit = 0.5 * (we * (d - 1.0) + wg * d);
                let dx = self.head.backward(&tr.head, &[dlogit], &mut g[2]);
                let h = self.obs.output_dim();
                self.obs.backward(&tr.obs, &dx[..h], &mut g[0]);
                self.act.backward(&tr.act, &dx[h..], &mut g[1]);
            }
        }
        (loss, g)
    }

    fn params_finite(&self) -> bool {
        [&self.obs, &self.act, &self.head].iter().all(|m| m.params.iter().all(|p| p.is_finite()))
    }
}

/// Mean discriminator output over the expert's state-action pairs.
pub fn expert_mean_output(disc: &Discriminator, traj: &Trajectory) -> f64 {
    let table = disc.table();
    traj.steps.iter().map(|st| table[pair(st.state, st.action)]).sum::<f64>() / traj.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundStats {
    pub round: usize,
    /// Discriminator loss on fresh expert pairs and this round's rollout,
    /// measured before the round's discriminator updates.
    pub disc_loss: f64,
    pub entropy: f64,
    pub mean_surrogate: f64,
    pub expert_output: f64,
    pub generator_output: f64,
}

#[derive(Debug, Clone)]
pub struct GailOutcome {
    pub policy: Policy,
    pub discriminator: Discriminator,
    pub history: Vec<RoundStats>,
}

enum Generator {
    Tabular { logits: Vec<f64>, values: Vec<f64>, opt_pi: Adam },
    Mlp { actor: Mlp, critic: Mlp, opt_pi: Adam, opt_v: Adam },
}

fn softmax(logits: &[f64]) -> [f64; N_ACTIONS] {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; N_ACTIONS];
    for (x, l) in p.iter_mut().zip(logits) {
        *x = (l - m).exp();
    }
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

fn entropy(p: &[f64; N_ACTIONS]) -> f64 {
    -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

impl Generator {
    fn new(cfg: &GailConfig, rng: &mut StreamRng) -> Self {
        match cfg.generator {
            GeneratorKind::Tabular => Generator::Tabular {
                logits: vec![0.0; N_FEATURES],
                values: vec![0.0; N_STATES],
                opt_pi: Adam::new(N_FEATURES),
            },
            GeneratorKind::Mlp => {
                let actor = Mlp::normal(&[N_STATES, 16, 16, N_ACTIONS], Activation::Tanh, Activation::Identity, 0.1, rng);
                let critic = Mlp::normal(&[N_STATES, 16, 16, 1], Activation::Tanh, Activation::Identity, 0.1, rng);
                let (na, nc) = (actor.n_params(), critic.n_params());
                Generator::Mlp { actor, critic, opt_pi: Adam::new(na), opt_v: Adam::new(nc) }
            }
        }
    }

    fn policy(&self) -> Policy {
        let mut pi = [[0.0; N_ACTIONS]; N_STATES];
        for (s, row) in pi.iter_mut().enumerate() {
            *row = match self {
                Generator::Tabular { logits, .. } => softmax(&logits[s * N_ACTIONS..(s + 1) * N_ACTIONS]),
                Generator::Mlp { actor, .. } => softmax(&actor.forward(&one_hot(s, N_STATES))),
            };
        }
        Policy { pi, source: PolicySource::Gail }
    }

    fn values(&self) -> [f64; N_STATES] {
        let mut v = [0.0; N_STATES];
        for (s, x) in v.iter_mut().enumerate() {
            *x = match self {
                Generator::Tabular { values, .. } => values[s],
                Generator::Mlp { critic, .. } => critic.forward(&one_hot(s, N_STATES))[0],
            };
        }
        v
    }

    /// One descent step given dLoss/dlogits and dLoss/dV aggregated per state.
    fn step(&mut self, dlogits: &[[f64; N_ACTIONS]; N_STATES], dvalues: &[f64; N_STATES], cfg: &GailConfig) {
        match self {
            Generator::Tabular { logits, opt_pi, .. } => {
                let lr = cfg.learning_rate * cfg.tabular_lr_scale;
                let flat: Vec<f64> = dlogits.iter().flatten().copied().collect();
                match cfg.tabular_optimizer {
                    TabularOptimizer::Adam => opt_pi.step(logits, &flat, lr),
                    TabularOptimizer::Sgd => {
                        for (l, g) in logits.iter_mut().zip(&flat) {
                            *l -= lr * g;
                        }
                    }
                }
            }
            Generator::Mlp { actor, critic, opt_pi, opt_v } => {
                let mut ga = vec![0.0; actor.n_params()];
                let mut gc = vec![0.0; critic.n_params()];
                for s in 0..N_STATES {
                    let x = one_hot(s, N_STATES);
                    if dlogits[s].iter().any(|g| *g != 0.0) {
                        let tr = actor.forward_trace(&x);
                        actor.backward(&tr, &dlogits[s], &mut ga);
                    }
                    if dvalues[s] != 0.0 {
                        let tr = critic.forward_trace(&x);
                        critic.backward(&tr, &[dvalues[s]], &mut gc);
                    }
                }
                opt_pi.step(&mut actor.params, &ga, cfg.learning_rate);
                opt_v.step(&mut critic.params, &gc, cfg.learning_rate);
            }
        }
    }

    /// Tabular baseline: a squared-error regression step toward each visited
    /// state's mean return target.
    fn regress_values(&mut self, buffer: &[Transition], targets: &[f64], step: f64) {
        if let Generator::Tabular { values, .. } = self {
            let mut sum = [0.0; N_STATES];
            let mut count = [0.0; N_STATES];
            for (tr, y) in buffer.iter().zip(targets) {
                sum[tr.state.index()] += y;
                count[tr.state.index()] += 1.0;
            }
            for s in 0..N_STATES {
                if count[s] > 0.0 {
                    values[s] += step * (sum[s] / count[s] - values[s]);
                }
            }
        }
    }

    fn finite(&self) -> bool {
        match self {
            Generator::Tabular { logits, values, .. } => logits.iter().chain(values.iter()).all(|x| x.is_finite()),
            Generator::Mlp { actor, critic, .. } => {
                actor.params.iter().chain(critic.params.iter()).all(|x| x.is_finite())
            }
        }
    }
}

/// Running variance of the surrogate reward stream (Welford).
#[derive(Debug, Default)]
struct RunningScale {
    n: f64,
    mean: f64,
    m2: f64,
}

impl RunningScale {
    fn update(&mut self, xs: &[f64]) {
        for &x in xs {
            self.n += 1.0;
            let d = x - self.mean;
            self.mean += d / self.n;
            self.m2 += d * (x - self.mean);
        }
    }

    fn std(&self) -> f64 {
        if self.n < 2.0 {
            1.0
        } else {
            (self.m2 / self.n).sqrt().max(1e-8)
        }
    }
}

struct Transition {
    state: State,
    action: Action,
    /// The episode restarts after this step.
    last: bool,
}

fn empirical_weights<'a>(pairs: impl Iterator<Item = (State, Action)> + 'a) -> [f64; N_FEATURES] {
    let mut w = [0.0; N_FEATURES];
    let mut n = 0.0;
    for (s, a) in pairs {
        w[pair(s, a)] += 1.0;
        n += 1.0;
    }
    if n > 0.0 {
        w.iter_mut().for_each(|x| *x /= n);
    }
    w
}

/// Trains a generator against a single expert trajectory and returns its
/// softmax policy together with the final discriminator and per-round curve.
pub fn train_gail(traj: &Trajectory, env: &Environment, cfg: &GailConfig) -> Result<GailOutcome> {
    cfg.check()?;
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if traj.len() < cfg.batch_size {
        log::warn!(
            "expert {} has {} pairs, fewer than the batch size {}; sampling with replacement",
            traj.user_id,
            traj.len(),
            cfg.batch_size
        );
    }
    let mut init_rng = seed::stream(cfg.seed, &["gail", "init"]);
    let mut env_rng = seed::stream(cfg.seed, &["gail", "rollout"]);
    let mut batch_rng = seed::stream(cfg.seed, &["gail", "batches"]);

    let mut disc = Discriminator::init(cfg.hidden_dim, &mut init_rng);
    let mut opt_d = [Adam::new(disc.obs.n_params()), Adam::new(disc.act.n_params()), Adam::new(disc.head.n_params())];
    let mut gen = Generator::new(cfg, &mut init_rng);
    let mut scale = RunningScale::default();
    let episode_len = cfg.episode_len.unwrap_or(traj.len());

    let expert: Vec<(State, Action)> = traj.steps.iter().map(|s| (s.state, s.action)).collect();
    let draw_expert = |rng: &mut StreamRng, n: usize| {
        empirical_weights((0..n).map(|_| expert[rng.random_range(0..expert.len())]))
    };

    let rounds = cfg.total_steps.div_ceil(cfg.n_steps);
    let mut history = Vec::with_capacity(rounds);
    let mut state = State::ALL[seed::categorical(&mut env_rng, env.d0())];
    let mut episode_t = 0;
    let average_start = ((1.0 - cfg.average_fraction) * rounds as f64).floor() as usize;
    let mut avg_rows = [[0.0; N_ACTIONS]; N_STATES];
    let mut averaged = 0usize;

    for round in 0..rounds {
        let policy = gen.policy();
        let mut buffer = Vec::with_capacity(cfg.n_steps);
        for _ in 0..cfg.n_steps {
            let action = policy.sample(state, &mut env_rng);
            episode_t += 1;
            let last = episode_t >= episode_len;
            buffer.push(Transition { state, action, last });
            state = if last {
                episode_t = 0;
                State::ALL[seed::categorical(&mut env_rng, env.d0())]
            } else {
                State::ALL[seed::categorical(&mut env_rng, env.row(state, action))]
            };
        }
        let bootstrap_state = state;

        let rollout_w = empirical_weights(buffer.iter().map(|t| (t.state, t.action)));
        let fresh_expert = draw_expert(&mut batch_rng, cfg.n_steps);
        let (disc_loss, _) = disc.bce_grad(&fresh_expert, &rollout_w);

        for _ in 0..cfg.disc_updates_per_round {
            let we = draw_expert(&mut batch_rng, cfg.batch_size);
            let wg = empirical_weights((0..cfg.batch_size).map(|_| {
                let t = &buffer[batch_rng.random_range(0..buffer.len())];
                (t.state, t.action)
            }));
            let (_, g) = disc.bce_grad(&we, &wg);
            opt_d[0].step(&mut disc.obs.params, &g[0], cfg.learning_rate);
            opt_d[1].step(&mut disc.act.params, &g[1], cfg.learning_rate);
            opt_d[2].step(&mut disc.head.params, &g[2], cfg.learning_rate);
        }
        if !disc.params_finite() {
            return Err(Error::NonFinite("gail discriminator".into()));
        }

        let table = disc.table();
        let mut rewards: Vec<f64> = buffer
            .iter()
            .map(|t| -(1.0 - table[pair(t.state, t.action)]).clamp(1e-12, 1.0).ln())
            .collect();
        let mean_surrogate = rewards.iter().sum::<f64>() / rewards.len() as f64;
        if cfg.running_norm {
            scale.update(&rewards);
            let sd = scale.std();
            rewards.iter_mut().for_each(|r| *r /= sd);
        }

        // Generalized advantage estimates against the value baseline.
        let v = gen.values();
        let n = buffer.len();
        let mut adv = vec![0.0; n];
        let mut running = 0.0;
        for t in (0..n).rev() {
            let tr = &buffer[t];
            let next_v = if tr.last {
                0.0
            } else if t + 1 < n {
                v[buffer[t + 1].state.index()]
            } else {
                v[bootstrap_state.index()]
            };
            if tr.last {
                running = 0.0;
            }
            let delta = rewards[t] + cfg.gamma * next_v - v[tr.state.index()];
            running = delta + cfg.gamma * cfg.gae_lambda * running;
            adv[t] = running;
        }
        let targets: Vec<f64> = adv.iter().zip(&buffer).map(|(a, t)| a + v[t.state.index()]).collect();
        let mean = adv.iter().sum::<f64>() / n as f64;
        let sd = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let adv_scale = if cfg.normalize_advantages { sd + 1e-8 } else { 1.0 };
        let norm_adv: Vec<f64> = adv.iter().map(|a| (a - mean) / adv_scale).collect();

        let r_table: Vec<f64> = table
            .iter()
            .map(|d| {
                let r = -(1.0 - d).clamp(1e-12, 1.0).ln();
                if cfg.running_norm { r / scale.std() } else { r }
            })
            .collect();

        gen.regress_values(&buffer, &targets, cfg.value_step);

        let mut mean_entropy = 0.0;
        for epoch in 0..cfg.policy_epochs {
            let pi = gen.policy();
            let values = gen.values();
            let n_f = n as f64;
            // Per-sample action weights: the sampled indicator, or the policy
            // itself when every action's advantage is scored.
            let mut per_sample: Vec<[f64; N_ACTIONS]> = Vec::with_capacity(n);
            match cfg.estimator {
                Estimator::Sampled => {
                    for a in &norm_adv {
                        let mut w = [0.0; N_ACTIONS];
                        w[0] = *a;
                        per_sample.push(w);
                    }
                }
                Estimator::Expected => {
                    let mut raw = Vec::with_capacity(n);
                    for tr in &buffer {
                        let s = tr.state;
                        let mut q = [0.0; N_ACTIONS];
                        for a in Action::ALL {
                            q[a.index()] = r_table[pair(s, a)] + cfg.gamma * env.expect(s, a, &values)
                                - values[s.index()];
                        }
                        raw.push(q);
                    }
                    let flat: Vec<(f64, f64)> = raw
                        .iter()
                        .zip(&buffer)
                        .flat_map(|(q, tr)| q.iter().zip(pi.row(tr.state)).map(|(x, p)| (*x, *p)).collect::<Vec<_>>())
                        .collect();
                    let mean = flat.iter().map(|(x, p)| x * p).sum::<f64>() / n_f;
                    let var = flat.iter().map(|(x, p)| p * (x - mean).powi(2)).sum::<f64>() / n_f;
                    let sd = if cfg.normalize_advantages { var.sqrt() + 1e-8 } else { 1.0 };
                    for q in raw {
                        per_sample.push(q.map(|x| (x - mean) / sd));
                    }
                }
            }
            let mut dlogits = [[0.0; N_ACTIONS]; N_STATES];
            let mut dvalues = [0.0; N_STATES];
            let mut ent_sum = 0.0;
            for ((tr, w), target) in buffer.iter().zip(&per_sample).zip(&targets) {
                let s = tr.state.index();
                let p = pi.row(tr.state);
                let h = entropy(p);
                ent_sum += h;
                // Gradient of the surrogate objective with respect to the logits.
                let mut g = [0.0; N_ACTIONS];
                match cfg.estimator {
                    Estimator::Sampled => {
                        for j in 0..N_ACTIONS {
                            let onehot = if j == tr.action.index() { 1.0 } else { 0.0 };
                            g[j] = w[0] * (onehot - p[j]);
                        }
                    }
                    Estimator::Expected => {
                        let avg: f64 = p.iter().zip(w).map(|(pj, aj)| pj * aj).sum();
                        for j in 0..N_ACTIONS {
                            g[j] = p[j] * (w[j] - avg);
                        }
                    }
                }
                for j in 0..N_ACTIONS {
                    let d_ent = -p[j] * (p[j].max(1e-300).ln() + h);
                    dlogits[s][j] -= (g[j] + cfg.entropy_coef * d_ent) / n_f;
                }
                dvalues[s] += 2.0 * (values[s] - target) / n_f;
            }
            if epoch == 0 {
                mean_entropy = ent_sum / n_f;
            }
            gen.step(&dlogits, &dvalues, cfg);
        }
        if !gen.finite() {
            return Err(Error::NonFinite("gail generator".into()));
        }

        let expert_output = fresh_expert.iter().zip(&table).map(|(w, d)| w * d).sum();
        let generator_output = rollout_w.iter().zip(&table).map(|(w, d)| w * d).sum();
        if round >= average_start {
            let p = gen.policy();
            for st in State::ALL {
                for (acc, x) in avg_rows[st.index()].iter_mut().zip(p.row(st)) {
                    *acc += x;
                }
            }
            averaged += 1;
        }
        history.push(RoundStats {
            round,
            disc_loss,
            entropy: mean_entropy,
            mean_surrogate,
            expert_output,
            generator_output,
        });
    }

    let policy = if averaged == 0 {
        gen.policy()
    } else {
        let rows = avg_rows.map(|r| r.map(|x| x / averaged as f64));
        Policy::from_rows(rows, PolicySource::Gail)?
    };
    Ok(GailOutcome { policy, discriminator: disc, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::rollout;

    #[test]
    fn zero_discriminator_is_half() {
        let d = Discriminator::zeros(8);
        for s in State::ALL {
            for a in Action::ALL {
                assert_eq!(d.forward(s, a), 0.5);
            }
        }
        let mut rng = seed::rng(1);
        let d = Discriminator::init(8, &mut rng);
        let x = d.forward(State::InitialThread, Action::CreateThread);
        assert_eq!(x, d.forward(State::InitialThread, Action::CreateThread));
        assert!(d.table().iter().all(|p| *p > 0.0 && *p < 1.0));
    }

    #[test]
    fn discriminator_gradient_matches_finite_differences() {
        let mut rng = seed::rng(5);
        let d = Discriminator::init(4, &mut rng);
        let mut we = [0.0; N_FEATURES];
        let mut wg = [0.0; N_FEATURES];
        we[1] = 0.7;
        we[20] = 0.3;
        wg[1] = 0.2;
        wg[40] = 0.8;
        let (_, g) = d.bce_grad(&we, &wg);
        let h = 1e-6;
        for (part, grad) in g.iter().enumerate() {
            for i in 0..grad.len() {
                let bump = |delta: f64| {
                    let mut e = d.clone();
                    let m = match part {
                        0 => &mut e.obs,
                        1 => &mut e.act,
                        _ => &mut e.head,
                    };
                    m.params[i] += delta;
                    e.bce_grad(&we, &wg).0
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-6, "part {part} param {i}");
            }
        }
    }

    #[test]
    fn occupancy_examples() {
        let env = Environment::default().with_initial_state(State::InitialThread).unwrap();
        let rho = occupancy_measure(&Policy::deterministic(Action::CreateThread), &env, 0.9, 2).unwrap();
        assert!((rho.rho[0][1] - 2.71).abs() < 1e-12);
        assert!((rho.total() - 2.71).abs() < 1e-12);

        let uniform = Policy::uniform(PolicySource::Scripted);
        let env = Environment::default();
        let rho = occupancy_measure(&uniform, &env, 0.9, 10).unwrap();
        let mu = expected_state_visitation(&uniform, &env, 10);
        for s in 0..N_STATES {
            for a in 0..N_ACTIONS {
                assert!((rho.rho[s][a] - mu.mu[s] / 6.0).abs() < 1e-12);
            }
            assert!((rho.state_marginal()[s] - mu.mu[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_learning_rate_returns_uniform() {
        let t = rollout(&Policy::deterministic(Action::CreateThread), &Environment::default(), 200, 3);
        let cfg = GailConfig { learning_rate: 0.0, total_steps: 1_000, ..Default::default() };
        let out = train_gail(&t, &Environment::default(), &cfg).unwrap();
        assert_eq!(out.policy.pi, Policy::uniform(PolicySource::Gail).pi);
        out.policy.check().unwrap();
    }

    #[test]
    fn learns_scripted_thread_creator() {
        let env = Environment::default();
        let t = rollout(&Policy::deterministic(Action::CreateThread), &env, 500, 3);
        let out = train_gail(&t, &env, &GailConfig::default()).unwrap();
        assert!(out.policy.prob(State::InitialThread, Action::CreateThread) >= 0.9);
    }
}
