//! State/action vocabulary and dynamics of the discussion-platform MDP.
//!
//! A user is an agent that observes one of twelve interaction states and
//! picks one of six actions. The successor state is the encoding of the event
//! the action produces, so the legal successor set depends on the action only.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_STATES: usize = 12;
pub const N_ACTIONS: usize = 6;

/// Agreement stance of a reply toward its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stance {
    Agree,
    Neutral,
    Disagree,
}

impl Stance {
    pub const ALL: [Stance; 3] = [Stance::Agree, Stance::Neutral, Stance::Disagree];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Stance {
        Stance::ALL[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum State {
    /// First interaction, creating a thread. Also re-entered by every new thread.
    InitialThread,
    InitialRootComment,
    InitialReply(Stance),
    EngagedRootComment,
    EngagedReply(Stance),
    GetReply(Stance),
}

impl State {
    /// All states in canonical index order.
    pub const ALL: [State; N_STATES] = [
        State::InitialThread,
        State::InitialRootComment,
        State::InitialReply(Stance::Agree),
        State::InitialReply(Stance::Neutral),
        State::InitialReply(Stance::Disagree),
        State::EngagedRootComment,
        State::EngagedReply(Stance::Agree),
        State::EngagedReply(Stance::Neutral),
        State::EngagedReply(Stance::Disagree),
        State::GetReply(Stance::Agree),
        State::GetReply(Stance::Neutral),
        State::GetReply(Stance::Disagree),
    ];

    pub const INITIAL: [State; 5] = [
        State::InitialThread,
        State::InitialRootComment,
        State::InitialReply(Stance::Agree),
        State::InitialReply(Stance::Neutral),
        State::InitialReply(Stance::Disagree),
    ];

    pub fn index(self) -> usize {
        match self {
            State::InitialThread => 0,
            State::InitialRootComment => 1,
            State::InitialReply(x) => 2 + x.index(),
            State::EngagedRootComment => 5,
            State::EngagedReply(x) => 6 + x.index(),
            State::GetReply(x) => 9 + x.index(),
        }
    }

    pub fn from_index(i: usize) -> Option<State> {
        State::ALL.get(i).copied()
    }

    pub fn is_initial(self) -> bool {
        self.index() < 5
    }

    pub fn name(self) -> &'static str {
        STATE_NAMES[self.index()]
    }
}

const STATE_NAMES: [&str; N_STATES] = [
    "IT", "IRC", "IR+", "IR~", "IR-", "ERC", "ER+", "ER~", "ER-", "GR+", "GR~", "GR-",
];

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for State {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        STATE_NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| State::ALL[i])
            .ok_or_else(|| Error::UnknownName(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    WaitReply,
    CreateThread,
    RootComment,
    Reply(Stance),
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [
        Action::WaitReply,
        Action::CreateThread,
        Action::RootComment,
        Action::Reply(Stance::Agree),
        Action::Reply(Stance::Neutral),
        Action::Reply(Stance::Disagree),
    ];

    pub fn index(self) -> usize {
        match self {
            Action::WaitReply => 0,
            Action::CreateThread => 1,
            Action::RootComment => 2,
            Action::Reply(x) => 3 + x.index(),
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        ACTION_NAMES[self.index()]
    }

    pub fn is_reply(self) -> bool {
        matches!(self, Action::Reply(_))
    }
}

const ACTION_NAMES: [&str; N_ACTIONS] = ["WR", "CT", "RC", "PR+", "PR~", "PR-"];

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ACTION_NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| Action::ALL[i])
            .ok_or_else(|| Error::UnknownName(s.to_string()))
    }
}

macro_rules! name_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.name())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

name_serde!(State);
name_serde!(Action);

const GET_REPLY: [State; 3] = [
    State::GetReply(Stance::Agree),
    State::GetReply(Stance::Neutral),
    State::GetReply(Stance::Disagree),
];

/// Successor states reachable from `(state, action)`. Independent of `state`.
pub fn legal_next_states(_state: State, action: Action) -> &'static [State] {
    match action {
        Action::CreateThread => &[State::InitialThread],
        Action::RootComment => &[State::EngagedRootComment],
        Action::Reply(Stance::Agree) => &[State::EngagedReply(Stance::Agree)],
        Action::Reply(Stance::Neutral) => &[State::EngagedReply(Stance::Neutral)],
        Action::Reply(Stance::Disagree) => &[State::EngagedReply(Stance::Disagree)],
        Action::WaitReply => &GET_REPLY,
    }
}

pub fn initial_states() -> &'static [State] {
    &State::INITIAL
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub state: State,
    pub action: Action,
}

impl Step {
    pub fn new(state: State, action: Action) -> Self {
        Step { state, action }
    }
}

/// One user's observed state-action sequence.
///
/// `timestamps`, when present, hold one entry per step and optionally one more
/// for the terminal state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub user_id: String,
    pub steps: Vec<Step>,
    pub timestamps: Option<Vec<i64>>,
    pub terminal_state: Option<State>,
}

impl Trajectory {
    pub fn new(user_id: impl Into<String>, steps: Vec<Step>) -> Self {
        Trajectory {
            user_id: user_id.into(),
            steps,
            timestamps: None,
            terminal_state: None,
        }
    }

    pub fn from_pairs(user_id: impl Into<String>, pairs: &[(State, Action)]) -> Self {
        Self::new(user_id, pairs.iter().map(|&(s, a)| Step::new(s, a)).collect())
    }

    pub fn with_terminal(mut self, terminal: State) -> Self {
        self.terminal_state = Some(terminal);
        self
    }

    /// Number of decision steps T.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The observed state sequence, terminal state included.
    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        self.steps.iter().map(|s| s.state).chain(self.terminal_state)
    }

    pub fn validate(&self) -> Validation {
        validate_trajectory(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    NonInitialStart(State),
    IllegalTransition { step: usize, from: State, action: Action, to: State },
    TimestampLength { expected: usize, got: usize },
    DecreasingTimestamp { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "empty trajectory"),
            Violation::NonInitialStart(s) => write!(f, "non-initial start state {s}"),
            Violation::IllegalTransition { step, from, action, to } => {
                write!(f, "illegal transition at step {step}: ({from},{action}) -> {to}")
            }
            Violation::TimestampLength { expected, got } => {
                write!(f, "timestamp count {got}, expected {expected}")
            }
            Violation::DecreasingTimestamp { index } => {
                write!(f, "timestamp decreases at index {index}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Validation {
    pub violations: Vec<Violation>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    /// Violations other than emptiness. Encoding a single-event log yields an
    /// empty but otherwise well-formed trajectory.
    pub fn structural(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| !matches!(v, Violation::Empty))
    }
}

/// Reports every violated trajectory invariant. Never panics.
pub fn validate_trajectory(traj: &Trajectory) -> Validation {
    let mut violations = Vec::new();
    match traj.steps.first() {
        None => violations.push(Violation::Empty),
        Some(first) if !first.state.is_initial() => {
            violations.push(Violation::NonInitialStart(first.state))
        }
        Some(_) => {}
    }
    let next_states = traj.steps.iter().skip(1).map(|s| s.state).chain(traj.terminal_state);
    for (t, (step, to)) in traj.steps.iter().zip(next_states).enumerate() {
        if !legal_next_states(step.state, step.action).contains(&to) {
            violations.push(Violation::IllegalTransition {
                step: t + 1,
                from: step.state,
                action: step.action,
                to,
            });
        }
    }
    if let Some(ts) = &traj.timestamps {
        let t = traj.steps.len();
        let with_terminal = t + usize::from(traj.terminal_state.is_some());
        if ts.len() != t && ts.len() != with_terminal {
            violations.push(Violation::TimestampLength { expected: with_terminal, got: ts.len() });
        }
        for (i, w) in ts.windows(2).enumerate() {
            if w[1] < w[0] {
                violations.push(Violation::DecreasingTimestamp { index: i + 1 });
            }
        }
    }
    Validation { violations }
}

/// Transition kernel, initial-state distribution and discount of the MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    transition: Box<[[[f64; N_STATES]; N_ACTIONS]; N_STATES]>,
    d0: [f64; N_STATES],
    agreement_dist: [f64; 3],
    pub gamma: f64,
}

pub const UNIFORM_AGREEMENT: [f64; 3] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];

impl Default for Environment {
    fn default() -> Self {
        let d0 = [0.2, 0.2, 0.2, 0.2, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        Environment::new(d0, UNIFORM_AGREEMENT, 0.9).expect("default environment is valid")
    }
}

impl Environment {
    /// Builds the default kernel: deterministic actions move to their single legal
    /// successor, `WR` spreads over the get-reply states by `agreement_dist`.
    pub fn new(d0: [f64; N_STATES], agreement_dist: [f64; 3], gamma: f64) -> Result<Self> {
        check_distribution(&agreement_dist, "agreement_dist")?;
        let mut transition = Box::new([[[0.0; N_STATES]; N_ACTIONS]; N_STATES]);
        for s in State::ALL {
            for a in Action::ALL {
                let row = &mut transition[s.index()][a.index()];
                match a {
                    Action::WaitReply => {
                        for x in Stance::ALL {
                            row[State::GetReply(x).index()] = agreement_dist[x.index()];
                        }
                    }
                    _ => row[legal_next_states(s, a)[0].index()] = 1.0,
                }
            }
        }
        Self::from_kernel(transition, d0, agreement_dist, gamma)
    }

    pub fn from_kernel(
        transition: Box<[[[f64; N_STATES]; N_ACTIONS]; N_STATES]>,
        d0: [f64; N_STATES],
        agreement_dist: [f64; 3],
        gamma: f64,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidConfig(format!("gamma must lie in (0,1), got {gamma}")));
        }
        for s in State::ALL {
            for a in Action::ALL {
                let row = &transition[s.index()][a.index()];
                let sum: f64 = row.iter().sum();
                let legal = legal_next_states(s, a);
                let off_support = State::ALL
                    .iter()
                    .any(|n| row[n.index()] != 0.0 && !legal.contains(n));
                if (sum - 1.0).abs() > 1e-9 || row.iter().any(|p| *p < 0.0) || off_support {
                    return Err(Error::NonStochasticKernel { state: s, action: a });
                }
            }
        }
        check_distribution(&d0, "d0")?;
        if State::ALL.iter().any(|s| !s.is_initial() && d0[s.index()] > 0.0) {
            return Err(Error::InvalidConfig("d0 has mass on a non-initial state".into()));
        }
        Ok(Environment { transition, d0, agreement_dist, gamma })
    }

    /// Same dynamics, every episode starting in `state`.
    pub fn with_initial_state(&self, state: State) -> Result<Self> {
        if !state.is_initial() {
            return Err(Error::InvalidConfig(format!("{state} is not an initial state")));
        }
        let mut d0 = [0.0; N_STATES];
        d0[state.index()] = 1.0;
        Ok(Environment { d0, ..self.clone() })
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::from_kernel(self.transition.clone(), self.d0, self.agreement_dist, gamma)
    }

    pub fn p(&self, s: State, a: Action, next: State) -> f64 {
        self.transition[s.index()][a.index()][next.index()]
    }

    pub fn row(&self, s: State, a: Action) -> &[f64; N_STATES] {
        &self.transition[s.index()][a.index()]
    }

    pub fn d0(&self) -> &[f64; N_STATES] {
        &self.d0
    }

    pub fn agreement_dist(&self) -> &[f64; 3] {
        &self.agreement_dist
    }

    /// Expected value of `v` at the successor of `(s, a)`.
    pub fn expect(&self, s: State, a: Action, v: &[f64; N_STATES]) -> f64 {
        // Only legal successors carry mass.
        legal_next_states(s, a)
            .iter()
            .map(|n| self.p(s, a, *n) * v[n.index()])
            .sum()
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    let sum: f64 = p.iter().sum();
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if p.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!("{what} is not a probability vector")));
    }
    Ok(())
}
