//! File formats: trajectory and embedding-pool NDJSON, policy tables, reward
//! vectors, training curves, cluster and temporal reports.
//!
//! Every writer takes an optional [`Provenance`] that is emitted as a leading
//! `#` comment line; every reader skips such lines.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytics::TemporalSummary;
use crate::cluster::{ClusterProfile, KDiagnostic};
use crate::detect::experiment::ExperimentReport;
use crate::error::{Error, Result};
use crate::gail::RoundStats;
use crate::ingest::{Label, RawEvent, UserEventLog};
use crate::irl::EpochStats;
use crate::mdp::{Action, State, Step, Trajectory, N_ACTIONS, N_STATES};
use crate::policy::{Policy, PolicySource, N_FEATURES};
use crate::simulate::EmbeddingPool;

/// Config hash and master seed stamped into output files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
}

impl Provenance {
    pub fn line(&self) -> String {
        format!("# config_sha256={} master_seed={}\n", self.config_hash, self.master_seed)
    }
}

fn header(p: Option<&Provenance>) -> String {
    p.map(Provenance::line).unwrap_or_default()
}

/// Writes `contents` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn content_lines<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    reader.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| {
        l.as_ref().map(|s| !s.trim().is_empty() && !s.trim_start().starts_with('#')).unwrap_or(true)
    })
}

fn parse_err(line: usize, message: impl ToString) -> Error {
    Error::Parse { line, message: message.to_string() }
}

/// One line of a trajectory file. `states` holds T or T+1 names (the last
/// being the terminal state), `actions` holds T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub user_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<Vec<i64>>,
}

impl TrajectoryRecord {
    pub fn new(traj: &Trajectory, label: Option<Label>) -> Self {
        TrajectoryRecord {
            user_id: traj.user_id.clone(),
            label,
            states: traj.states().map(|s| s.name().to_string()).collect(),
            actions: traj.steps.iter().map(|s| s.action.name().to_string()).collect(),
            ts: traj.timestamps.clone(),
        }
    }

    pub fn to_trajectory(&self) -> Result<Trajectory> {
        let t = self.actions.len();
        if self.states.len() != t && self.states.len() != t + 1 {
            return Err(Error::LengthMismatch(self.states.len(), t));
        }
        let states: Vec<State> = self.states.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        let actions: Vec<Action> = self.actions.iter().map(|a| a.parse()).collect::<Result<_>>()?;
        let steps = states.iter().zip(&actions).map(|(s, a)| Step::new(*s, *a)).collect();
        Ok(Trajectory {
            user_id: self.user_id.clone(),
            steps,
            timestamps: self.ts.clone(),
            terminal_state: (states.len() == t + 1).then(|| states[t]),
        })
    }
}

pub fn write_trajectories<W: Write>(
    mut w: W,
    provenance: Option<&Provenance>,
    users: &[(Trajectory, Option<Label>)],
) -> Result<()> {
    w.write_all(header(provenance).as_bytes())?;
    for (traj, label) in users {
        serde_json::to_writer(&mut w, &TrajectoryRecord::new(traj, *label))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads and validates a trajectory file. Any illegal record is an error
/// naming its line.
pub fn read_trajectories<R: BufRead>(reader: R) -> Result<Vec<(Trajectory, Option<Label>)>> {
    let mut out = Vec::new();
    for (line, text) in content_lines(reader) {
        let text = text?;
        let rec: TrajectoryRecord = serde_json::from_str(text.trim()).map_err(|e| parse_err(line, e))?;
        let traj = rec.to_trajectory().map_err(|e| parse_err(line, e))?;
        if let Some(v) = traj.validate().violations.first() {
            return Err(parse_err(line, format!("user {}: {v}", traj.user_id)));
        }
        out.push((traj, rec.label));
    }
    Ok(out)
}

#[derive(Serialize)]
struct EventOut<'a> {
    #[serde(flatten)]
    event: &'a RawEvent,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<Label>,
}

/// Event log in the format read by [`crate::ingest::read_event_log`].
pub fn write_event_log<W: Write>(mut w: W, provenance: Option<&Provenance>, logs: &[UserEventLog]) -> Result<()> {
    w.write_all(header(provenance).as_bytes())?;
    for log in logs {
        for event in &log.events {
            serde_json::to_writer(&mut w, &EventOut { event, label: log.label })?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// One row of a policy table.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRecord {
    pub user_id: String,
    pub label: Option<Label>,
    pub policy: Policy,
}

/// `STATE:ACTION` column names in row-major order.
pub fn policy_columns() -> Vec<String> {
    State::ALL
        .iter()
        .flat_map(|s| Action::ALL.iter().map(move |a| format!("{}:{}", s.name(), a.name())))
        .collect()
}

/// Flattened policy table: `user_id,label,source` then 72 probabilities.
pub fn write_policy_table<W: Write>(mut w: W, provenance: Option<&Provenance>, records: &[PolicyRecord]) -> Result<()> {
    w.write_all(header(provenance).as_bytes())?;
    let mut csv = csv::Writer::from_writer(w);
    let mut head = vec!["user_id".to_string(), "label".into(), "source".into()];
    head.extend(policy_columns());
    csv.write_record(&head).map_err(csv_err)?;
    for r in records {
        let mut row = vec![
            r.user_id.clone(),
            r.label.map(|l| l.name().to_string()).unwrap_or_default(),
            r.policy.source.name().to_string(),
        ];
        row.extend(r.policy.flatten().iter().map(|p| p.to_string()));
        csv.write_record(&row).map_err(csv_err)?;
    }
    csv.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_err(line, format!("{other:?}")),
    }
}

pub fn read_policy_table<R: std::io::Read>(reader: R) -> Result<Vec<PolicyRecord>> {
    let mut csv = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let head = csv.headers().map_err(csv_err)?.clone();
    let expected = policy_columns();
    if head.len() != 3 + N_FEATURES
        || &head[0] != "user_id"
        || head.iter().skip(3).zip(&expected).any(|(h, e)| h != e)
    {
        return Err(parse_err(1, "policy table header must be user_id,label,source followed by the 72 STATE:ACTION columns"));
    }
    let mut out = Vec::new();
    for rec in csv.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let label = match &rec[1] {
            "" => None,
            s => Some(s.parse().map_err(|e| parse_err(line, e))?),
        };
        let source: PolicySource = rec[2].parse().map_err(|e| parse_err(line, e))?;
        let values: Vec<f64> = rec
            .iter()
            .skip(3)
            .map(|v| v.trim().parse::<f64>().map_err(|_| parse_err(line, format!("bad probability `{v}`"))))
            .collect::<Result<_>>()?;
        let policy = Policy::from_flat(&values, source).map_err(|e| parse_err(line, e))?;
        out.push(PolicyRecord { user_id: rec[0].to_string(), label, policy });
    }
    Ok(out)
}

/// A single policy as a 12×6 grid with state and action headers.
pub fn policy_matrix_csv(policy: &Policy) -> String {
    let mut out = String::from("state");
    for a in Action::ALL {
        let _ = write!(out, ",{}", a.name());
    }
    out.push('\n');
    for s in State::ALL {
        out.push_str(s.name());
        for p in policy.row(s) {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PoolRecord {
    user_id: String,
    action: Action,
    vector: Vec<f64>,
}

/// One `{user_id, action, vector}` object per line.
pub fn write_pool<W: Write>(mut w: W, provenance: Option<&Provenance>, pool: &EmbeddingPool) -> Result<()> {
    w.write_all(header(provenance).as_bytes())?;
    for (user, action, vector) in pool.iter() {
        let rec = PoolRecord { user_id: user.to_string(), action, vector: vector.clone() };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// The dimension is taken from the first record; an empty file yields an
/// empty pool of dimension 1.
pub fn read_pool<R: BufRead>(reader: R) -> Result<EmbeddingPool> {
    let mut pool: Option<EmbeddingPool> = None;
    for (line, text) in content_lines(reader) {
        let text = text?;
        let rec: PoolRecord = serde_json::from_str(text.trim()).map_err(|e| parse_err(line, e))?;
        if rec.vector.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(line, "non-finite embedding value"));
        }
        let p = match pool.as_mut() {
            Some(p) => p,
            None => pool.insert(EmbeddingPool::new(rec.vector.len()).map_err(|e| parse_err(line, e))?),
        };
        p.insert(&rec.user_id, rec.action, rec.vector).map_err(|e| parse_err(line, e))?;
    }
    pool.map_or_else(|| EmbeddingPool::new(1), Ok)
}

/// Twelve `state,reward` lines.
pub fn reward_vector_csv(provenance: Option<&Provenance>, rewards: &[f64; N_STATES]) -> String {
    let mut out = header(provenance);
    out.push_str("state,reward\n");
    for s in State::ALL {
        let _ = writeln!(out, "{},{}", s.name(), rewards[s.index()]);
    }
    out
}

pub fn gail_curve_csv(provenance: Option<&Provenance>, history: &[RoundStats]) -> String {
    let mut out = header(provenance);
    out.push_str("round,disc_loss,entropy,mean_surrogate,expert_output,generator_output\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.round, r.disc_loss, r.entropy, r.mean_surrogate, r.expert_output, r.generator_output
        );
    }
    out
}

pub fn irl_curve_csv(provenance: Option<&Provenance>, history: &[EpochStats]) -> String {
    let mut out = header(provenance);
    out.push_str("epoch,data_term,grad_norm,visitation_l1\n");
    for (i, e) in history.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{}", i, e.data_term, e.grad_norm, e.visitation_l1);
    }
    out
}

pub fn assignments_csv(provenance: Option<&Provenance>, user_ids: &[String], assignments: &[usize]) -> Result<String> {
    if user_ids.len() != assignments.len() {
        return Err(Error::LengthMismatch(user_ids.len(), assignments.len()));
    }
    let mut csv = csv::Writer::from_writer(header(provenance).into_bytes());
    csv.write_record(["user_id", "cluster"]).map_err(csv_err)?;
    for (u, c) in user_ids.iter().zip(assignments) {
        csv.write_record([u.as_str(), &c.to_string()]).map_err(csv_err)?;
    }
    into_string(csv)
}

fn into_string(csv: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = csv.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Per cluster and action: the 5th, 50th and 95th percentile of the members'
/// action marginals.
pub fn cluster_profiles_csv(provenance: Option<&Provenance>, profiles: &[ClusterProfile]) -> String {
    let mut out = header(provenance);
    out.push_str("cluster,size,action,p5,p50,p95\n");
    for p in profiles {
        for (a, q) in Action::ALL.iter().zip(&p.marginal) {
            let _ = writeln!(out, "{},{},{},{},{},{}", p.cluster, p.size, a.name(), q.p5, q.p50, q.p95);
        }
    }
    out
}

pub fn k_diagnostics_csv(provenance: Option<&Provenance>, table: &[KDiagnostic]) -> String {
    let mut out = header(provenance);
    out.push_str("k,inertia,silhouette\n");
    for d in table {
        let _ = writeln!(out, "{},{},{}", d.k, d.inertia, d.silhouette);
    }
    out
}

/// One flat row per user: event count, burst and dormancy fractions, then
/// the log-spaced histogram counts.
pub fn temporal_summary_csv(
    provenance: Option<&Provenance>,
    rows: &[(String, Option<Label>, TemporalSummary)],
) -> Result<String> {
    let bins = rows.first().map_or(0, |r| r.2.histogram.counts.len());
    let mut csv = csv::Writer::from_writer(header(provenance).into_bytes());
    let mut head = vec!["user_id".to_string(), "label".into(), "deltas".into(), "frac_under_60s".into(), "frac_over_72h".into()];
    head.extend((0..bins).map(|b| format!("bin{b:02}")));
    csv.write_record(&head).map_err(csv_err)?;
    for (user, label, s) in rows {
        if s.histogram.counts.len() != bins {
            return Err(Error::DimensionMismatch { expected: bins, got: s.histogram.counts.len() });
        }
        let mut row = vec![
            user.clone(),
            label.map(|l| l.name().to_string()).unwrap_or_default(),
            s.deltas.len().to_string(),
            s.frac_under_60s.to_string(),
            s.frac_over_72h.to_string(),
        ];
        row.extend(s.histogram.counts.iter().map(u64::to_string));
        csv.write_record(&row).map_err(csv_err)?;
    }
    into_string(csv)
}

/// Writes `cells.csv`, `summary.csv` and `failures.csv` into `dir`.
pub fn write_report(dir: &Path, report: &ExperimentReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("cells.csv"), report.rows_csv().as_bytes())?;
    write_atomic(&dir.join("summary.csv"), report.summary_csv().as_bytes())?;
    write_atomic(&dir.join("failures.csv"), report.failures_csv().as_bytes())?;
    Ok(())
}

const _: () = assert!(N_FEATURES == N_STATES * N_ACTIONS);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Stance;

    fn sample() -> Trajectory {
        let mut t = Trajectory::from_pairs(
            "u,1",
            &[(State::InitialThread, Action::WaitReply), (State::GetReply(Stance::Agree), Action::Reply(Stance::Disagree))],
        )
        .with_terminal(State::EngagedReply(Stance::Disagree));
        t.timestamps = Some(vec![0, 10, 20]);
        t
    }

    #[test]
    fn trajectory_roundtrip() {
        let users = vec![(sample(), Some(Label::Troll)), (Trajectory::from_pairs("b", &[(State::InitialRootComment, Action::CreateThread)]), None)];
        let prov = Provenance { config_hash: "ab".into(), master_seed: 7 };
        let mut buf = Vec::new();
        write_trajectories(&mut buf, Some(&prov), &users).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# config_sha256=ab master_seed=7\n"));
        assert!(text.contains(r#""states":["IT","GR+","ER-"]"#));
        assert_eq!(read_trajectories(&buf[..]).unwrap(), users);
    }

    #[test]
    fn event_log_roundtrip() {
        let log = crate::ingest::decode_trajectory(&sample(), Some(Label::Troll));
        let mut buf = Vec::new();
        write_event_log(&mut buf, Some(&Provenance { config_hash: "c".into(), master_seed: 1 }), std::slice::from_ref(&log)).unwrap();
        let back = crate::ingest::read_event_log(&buf[..]).unwrap();
        assert_eq!(back, vec![log]);
    }

    #[test]
    fn illegal_trajectory_names_line() {
        let text = "# c\n{\"user_id\":\"a\",\"states\":[\"IT\",\"IT\"],\"actions\":[\"WR\"]}\n";
        match read_trajectories(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let bad_name = "{\"user_id\":\"a\",\"states\":[\"XX\"],\"actions\":[\"WR\"]}\n";
        assert!(matches!(read_trajectories(bad_name.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn policy_table_roundtrip() {
        let mut rows = [[0.0; N_ACTIONS]; N_STATES];
        for (i, r) in rows.iter_mut().enumerate() {
            r[i % N_ACTIONS] = 0.3;
            r[(i + 1) % N_ACTIONS] = 0.7;
        }
        let records = vec![
            PolicyRecord { user_id: "x,y".into(), label: Some(Label::Organic), policy: Policy::from_rows(rows, PolicySource::MaxentIrl).unwrap() },
            PolicyRecord { user_id: "z".into(), label: None, policy: Policy::uniform(PolicySource::Empirical) },
        ];
        let mut buf = Vec::new();
        write_policy_table(&mut buf, None, &records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().starts_with("user_id,label,source,IT:WR,IT:CT"));
        assert_eq!(read_policy_table(&buf[..]).unwrap(), records);
    }

    #[test]
    fn policy_matrix_layout() {
        let csv = policy_matrix_csv(&Policy::deterministic(Action::CreateThread));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 13);
        assert_eq!(lines[0], "state,WR,CT,RC,PR+,PR~,PR-");
        assert_eq!(lines[1], "IT,0,1,0,0,0,0");
    }

    #[test]
    fn pool_roundtrip() {
        let mut pool = EmbeddingPool::new(2).unwrap();
        pool.insert("a", Action::RootComment, vec![1.0, -0.5]).unwrap();
        pool.insert("a", Action::RootComment, vec![0.25, 2.0]).unwrap();
        pool.insert("b", Action::WaitReply, vec![0.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        write_pool(&mut buf, None, &pool).unwrap();
        assert_eq!(read_pool(&buf[..]).unwrap(), pool);
        let mixed = "{\"user_id\":\"a\",\"action\":\"WR\",\"vector\":[1]}\n{\"user_id\":\"a\",\"action\":\"WR\",\"vector\":[1,2]}\n";
        assert!(matches!(read_pool(mixed.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn reward_vector_names() {
        let csv = reward_vector_csv(None, &[0.5; N_STATES]);
        assert_eq!(csv.lines().count(), 13);
        assert_eq!(csv.lines().nth(12), Some("GR-,0.5"));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
