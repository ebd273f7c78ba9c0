//! Independent oracles and generators shared by the integration tests. They
//! avoid the library's own estimators so agreement is meaningful.
#![allow(dead_code)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trollscope::mdp::legal_next_states;
use trollscope::{Action, Environment, Label, Stance, State, Step, Trajectory, N_ACTIONS, N_STATES};

/// Builds a legal trajectory from a start index, a list of action indices and
/// a parallel list of stance picks used whenever the action is WR.
pub fn build_trajectory(user: &str, start: usize, choices: &[(usize, usize)]) -> Trajectory {
    let mut state = State::INITIAL[start % 5];
    let mut steps = Vec::with_capacity(choices.len());
    for &(a, x) in choices {
        let action = Action::ALL[a % N_ACTIONS];
        steps.push(Step::new(state, action));
        let next = legal_next_states(state, action);
        state = next[x % next.len()];
    }
    Trajectory::new(user, steps).with_terminal(state)
}

pub fn random_trajectory(rng: &mut ChaCha8Rng, user: &str, len: usize) -> Trajectory {
    let choices: Vec<(usize, usize)> = (0..len).map(|_| (rng.random_range(0..N_ACTIONS), rng.random_range(0..3))).collect();
    build_trajectory(user, rng.random_range(0..5), &choices)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

prop_compose! {
    pub fn arb_trajectory(max_len: usize)(
        start in 0usize..5,
        choices in prop::collection::vec((0usize..N_ACTIONS, 0usize..3), 1..max_len),
    ) -> Trajectory {
        build_trajectory("p", start, &choices)
    }
}

pub fn arb_row() -> impl Strategy<Value = [f64; N_ACTIONS]> {
    prop::array::uniform6(0.0f64..1.0).prop_map(|w| {
        let w = w.map(|x| x + 1e-3);
        let s: f64 = w.iter().sum();
        w.map(|x| x / s)
    })
}

pub fn arb_policy() -> impl Strategy<Value = trollscope::Policy> {
    prop::collection::vec(arb_row(), N_STATES).prop_map(|rows| {
        let mut pi = [[0.0; N_ACTIONS]; N_STATES];
        for (dst, src) in pi.iter_mut().zip(rows) {
            *dst = src;
        }
        trollscope::Policy { pi, source: trollscope::PolicySource::Scripted }
    })
}

/// Counts (s, a) pairs by linear scan over every cell.
pub fn oracle_counts(traj: &Trajectory) -> [[f64; N_ACTIONS]; N_STATES] {
    let mut c = [[0.0; N_ACTIONS]; N_STATES];
    for (si, s) in State::ALL.iter().enumerate() {
        for (ai, a) in Action::ALL.iter().enumerate() {
            c[si][ai] = traj.steps.iter().filter(|st| st.state == *s && st.action == *a).count() as f64;
        }
    }
    c
}

pub fn oracle_visitation(traj: &Trajectory) -> [[f64; N_ACTIONS]; N_STATES] {
    let t = traj.len() as f64;
    oracle_counts(traj).map(|row| row.map(|c| c / t))
}

/// Row-normalized counts; unvisited rows are uniform.
pub fn oracle_policy(traj: &Trajectory) -> [[f64; N_ACTIONS]; N_STATES] {
    oracle_counts(traj).map(|row| {
        let n: f64 = row.iter().sum();
        if n == 0.0 {
            [1.0 / N_ACTIONS as f64; N_ACTIONS]
        } else {
            row.map(|c| c / n)
        }
    })
}

/// Hard Q-iteration to a 1e-13 fixed point; returns the set of optimal
/// actions per state (ties within 1e-9 kept).
pub fn hard_optimal_actions(reward: &[f64; N_STATES], env: &Environment, gamma: f64) -> Vec<Vec<usize>> {
    let mut v = [0.0; N_STATES];
    let q_of = |v: &[f64; N_STATES]| {
        let mut q = [[0.0; N_ACTIONS]; N_STATES];
        for s in State::ALL {
            for a in Action::ALL {
                let ev: f64 = State::ALL.iter().map(|n| env.p(s, a, *n) * v[n.index()]).sum();
                q[s.index()][a.index()] = reward[s.index()] + gamma * ev;
            }
        }
        q
    };
    for _ in 0..100_000 {
        let q = q_of(&v);
        let next = q.map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < 1e-13 {
            break;
        }
    }
    q_of(&v)
        .iter()
        .map(|row| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..N_ACTIONS).filter(|a| row[*a] >= m - 1e-9).collect()
        })
        .collect()
}

pub struct OracleMetrics {
    pub f1_troll: f64,
    pub f1_organic: f64,
    pub recall_troll: f64,
    pub recall_organic: f64,
    pub macro_f1: f64,
}

/// Confusion-matrix metrics with zero-denominator ratios set to 0.
pub fn oracle_metrics(y_true: &[Label], y_pred: &[Label]) -> OracleMetrics {
    let mut cm = [[0usize; 2]; 2];
    let idx = |l: Label| usize::from(l == Label::Organic);
    for (t, p) in y_true.iter().zip(y_pred) {
        cm[idx(*t)][idx(*p)] += 1;
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let class = |c: usize| {
        let tp = cm[c][c];
        let fp = cm[1 - c][c];
        let fn_ = cm[c][1 - c];
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (r, f)
    };
    let (rt, ft) = class(0);
    let (ro, fo) = class(1);
    OracleMetrics { f1_troll: ft, f1_organic: fo, recall_troll: rt, recall_organic: ro, macro_f1: (ft + fo) / 2.0 }
}

pub fn stance_states() -> [State; 3] {
    [State::GetReply(Stance::Agree), State::GetReply(Stance::Neutral), State::GetReply(Stance::Disagree)]
}

/// Prints one acceptance line and returns whether it passed. Writes through
/// the raw stdout handle so the line survives libtest's output capture.
pub fn report(name: &str, pass: bool, detail: &str) -> bool {
    use std::io::Write;
    let line = format!("[{}] {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).and_then(|_| out.flush()).expect("stdout");
    pass
}

/// The three scripted GAIL experts: uniform, always-CT and a 70/30 WR/PR+ mix.
pub fn gail_experts() -> [(&'static str, trollscope::Policy); 3] {
    use trollscope::{Policy, PolicySource};
    let mut mix = [0.0; N_ACTIONS];
    mix[Action::WaitReply.index()] = 0.7;
    mix[Action::Reply(Stance::Agree).index()] = 0.3;
    [
        ("uniform", Policy::uniform(PolicySource::Scripted)),
        ("always-CT", Policy::deterministic(Action::CreateThread)),
        ("WR/PR+ mix", Policy::constant(mix, PolicySource::Scripted).unwrap()),
    ]
}

/// Demonstration length and training budget used for GAIL recovery checks.
pub const GAIL_DEMO_LEN: usize = 20_000;

pub fn gail_recovery_config(seed: u64) -> trollscope::gail::GailConfig {
    trollscope::gail::GailConfig {
        learning_rate: 1e-3,
        tabular_lr_scale: 1.0,
        estimator: trollscope::gail::Estimator::Sampled,
        total_steps: 300_000,
        seed,
        ..Default::default()
    }
}
