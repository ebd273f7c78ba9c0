//! Raw event logs and their encoding into trajectories.
//!
//! The event-log file holds one JSON object per line with keys `user_id`,
//! `kind`, `stance`, `ts`, `discussion_id` and an optional `label`. Unknown keys
//! are ignored so the reader streams arbitrarily large exports.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, Stance, State, Step, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Troll,
    Organic,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::Troll => "troll",
            Label::Organic => "organic",
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Troll => Label::Organic,
            Label::Organic => Label::Troll,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "troll" => Ok(Label::Troll),
            "organic" => Ok(Label::Organic),
            other => Err(Error::UnknownName(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Thread,
    RootComment,
    Reply,
    ReceivedReply,
}

impl EventKind {
    pub fn takes_stance(self) -> bool {
        matches!(self, EventKind::Reply | EventKind::ReceivedReply)
    }

    pub fn is_own(self) -> bool {
        self != EventKind::ReceivedReply
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEvent {
    pub user_id: String,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance: Option<Stance>,
    #[serde(rename = "ts")]
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discussion_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserEventLog {
    pub user_id: String,
    pub events: Vec<RawEvent>,
    pub label: Option<Label>,
}

impl UserEventLog {
    /// Sorts events by timestamp; equal timestamps keep their file order.
    pub fn sort(&mut self) {
        self.events.sort_by_key(|e| e.timestamp);
    }
}

#[derive(Deserialize)]
struct EventLine {
    #[serde(flatten)]
    event: RawEvent,
    #[serde(default)]
    label: Option<Label>,
}

fn check_event(i: usize, e: &RawEvent) -> Result<()> {
    match (e.kind.takes_stance(), e.stance.is_some()) {
        (true, false) => Err(Error::StanceMissing(i)),
        (false, true) => Err(Error::StanceUnexpected(i)),
        _ => Ok(()),
    }
}

/// Reads a newline-delimited event log and groups it per user (sorted by id).
/// Blank lines and lines starting with `#` are skipped.
pub fn read_event_log<R: BufRead>(reader: R) -> Result<Vec<UserEventLog>> {
    let mut users: BTreeMap<String, UserEventLog> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parsed: EventLine = serde_json::from_str(trimmed)
            .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        let event = parsed.event;
        if event.timestamp < 0 {
            return Err(Error::Parse { line: line_no, message: "negative timestamp".into() });
        }
        check_event(line_no, &event)
            .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        let log = users.entry(event.user_id.clone()).or_insert_with(|| UserEventLog {
            user_id: event.user_id.clone(),
            events: Vec::new(),
            label: None,
        });
        if log.label.is_none() {
            log.label = parsed.label;
        }
        log.events.push(event);
    }
    let mut logs: Vec<UserEventLog> = users.into_values().collect();
    for log in &mut logs {
        log.sort();
    }
    Ok(logs)
}

fn encode_state(e: &RawEvent, first: bool) -> State {
    let stance = e.stance.unwrap_or(Stance::Neutral);
    match (e.kind, first) {
        (EventKind::Thread, _) => State::InitialThread,
        (EventKind::RootComment, true) => State::InitialRootComment,
        (EventKind::RootComment, false) => State::EngagedRootComment,
        (EventKind::Reply, true) => State::InitialReply(stance),
        (EventKind::Reply, false) => State::EngagedReply(stance),
        (EventKind::ReceivedReply, _) => State::GetReply(stance),
    }
}

fn producing_action(e: &RawEvent) -> Action {
    match e.kind {
        EventKind::Thread => Action::CreateThread,
        EventKind::RootComment => Action::RootComment,
        EventKind::Reply => Action::Reply(e.stance.unwrap_or(Stance::Neutral)),
        EventKind::ReceivedReply => Action::WaitReply,
    }
}

/// Maps a time-ordered log onto a trajectory: state t encodes event t, action t
/// is the choice that produced event t+1, and the last event is the terminal state.
///
/// Received replies preceding the user's first own event are dropped, since a
/// trajectory must open in an initial state.
pub fn encode_events(log: &UserEventLog) -> Result<Trajectory> {
    if log.events.is_empty() {
        return Err(Error::EmptyLog);
    }
    for (i, e) in log.events.iter().enumerate() {
        check_event(i, e)?;
    }
    let start = log.events.iter().position(|e| e.kind.is_own()).ok_or(Error::EmptyLog)?;
    let events = &log.events[start..];

    let states: Vec<State> =
        events.iter().enumerate().map(|(i, e)| encode_state(e, i == 0)).collect();
    let steps: Vec<Step> = events
        .windows(2)
        .zip(&states)
        .map(|(w, s)| Step::new(*s, producing_action(&w[1])))
        .collect();
    let traj = Trajectory {
        user_id: log.user_id.clone(),
        steps,
        timestamps: Some(events.iter().map(|e| e.timestamp).collect()),
        terminal_state: states.last().copied(),
    };
    if let Some(v) = traj.validate().structural().next() {
        return Err(Error::EncodeInternal { user: log.user_id.clone(), detail: v.to_string() });
    }
    Ok(traj)
}

/// Inverse of [`encode_events`] on legal trajectories. Missing timestamps are
/// filled with one event per minute.
pub fn decode_trajectory(traj: &Trajectory, label: Option<Label>) -> UserEventLog {
    let events = traj
        .states()
        .enumerate()
        .map(|(i, s)| {
            let (kind, stance) = match s {
                State::InitialThread => (EventKind::Thread, None),
                State::InitialRootComment | State::EngagedRootComment => (EventKind::RootComment, None),
                State::InitialReply(x) | State::EngagedReply(x) => (EventKind::Reply, Some(x)),
                State::GetReply(x) => (EventKind::ReceivedReply, Some(x)),
            };
            let timestamp = traj
                .timestamps
                .as_ref()
                .and_then(|ts| ts.get(i).copied())
                .unwrap_or(i as i64 * 60);
            RawEvent { user_id: traj.user_id.clone(), kind, stance, timestamp, discussion_id: None }
        })
        .collect();
    UserEventLog { user_id: traj.user_id.clone(), events, label }
}

/// First `min(n, T)` steps. The terminal state is dropped when steps are cut.
pub fn truncate_first_n(traj: &Trajectory, n: usize) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::ZeroTruncation);
    }
    if n >= traj.len() {
        return Ok(traj.clone());
    }
    Ok(Trajectory {
        user_id: traj.user_id.clone(),
        steps: traj.steps[..n].to_vec(),
        timestamps: traj.timestamps.as_ref().map(|ts| ts[..n.min(ts.len())].to_vec()),
        terminal_state: None,
    })
}

pub const DEFAULT_MIN_EVENTS: usize = 10;

pub fn filter_min_activity(logs: Vec<UserEventLog>, min_events: usize) -> Vec<UserEventLog> {
    logs.into_iter().filter(|l| l.events.len() >= min_events).collect()
}
