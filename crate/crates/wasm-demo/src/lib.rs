//! Browser bindings for the demo page in `www/`. Every export takes and
//! returns JSON strings so the page needs no generated type glue.

use serde::Serialize;
use trollscope::cluster::action_marginal;
use trollscope::cohort::{synthetic_cohort, CohortConfig};
use trollscope::detect::experiment::{run_experiment, ExperimentConfig, Method};
use trollscope::detect::{ClassifierConfig, ForestConfig};
use trollscope::ingest::{encode_events, read_event_log};
use trollscope::irl::soft_value_iteration_from;
use trollscope::policy::{empirical_policy, visitation_frequency};
use trollscope::{Action, Environment, Policy, State, N_STATES};
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Grid {
    states: Vec<&'static str>,
    actions: Vec<&'static str>,
    rows: Vec<Vec<f64>>,
}

impl Grid {
    fn of(policy: &Policy) -> Grid {
        Grid {
            states: State::ALL.iter().map(|s| s.name()).collect(),
            actions: Action::ALL.iter().map(|a| a.name()).collect(),
            rows: State::ALL.iter().map(|s| policy.row(*s).to_vec()).collect(),
        }
    }
}

#[derive(Serialize)]
struct UserPolicy {
    user_id: String,
    label: Option<&'static str>,
    steps: usize,
    /// Action frequencies weighted by the user's state visitation.
    marginal: Vec<f64>,
    policy: Grid,
}

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(js)
}

/// Encodes an NDJSON event log and returns each user's empirical policy.
#[wasm_bindgen]
pub fn infer_policies(events_ndjson: &str) -> Result<String, JsError> {
    let logs = read_event_log(events_ndjson.as_bytes()).map_err(js)?;
    let mut out = Vec::with_capacity(logs.len());
    for log in &logs {
        let traj = encode_events(log).map_err(|e| js(format!("{}: {e}", log.user_id)))?;
        if traj.is_empty() {
            continue;
        }
        let policy = empirical_policy(&traj).map_err(js)?;
        let weights = visitation_frequency(&traj).map_err(js)?.state_marginal();
        out.push(UserPolicy {
            user_id: log.user_id.clone(),
            label: log.label.map(|l| l.name()),
            steps: traj.len(),
            marginal: action_marginal(&policy, Some(&weights)).map_err(js)?.to_vec(),
            policy: Grid::of(&policy),
        });
    }
    to_json(&out)
}

#[derive(Serialize)]
struct SoftPolicy {
    iterations: usize,
    values: Vec<f64>,
    policy: Grid,
}

/// Soft-optimal policy for a 12-entry state reward vector given as JSON.
#[wasm_bindgen]
pub fn soft_optimal_policy(rewards_json: &str, gamma: f64) -> Result<String, JsError> {
    let rewards: Vec<f64> = serde_json::from_str(rewards_json).map_err(js)?;
    let rewards: [f64; N_STATES] =
        rewards.try_into().map_err(|v: Vec<f64>| js(format!("expected {N_STATES} rewards, got {}", v.len())))?;
    let env = Environment::default().with_gamma(gamma).map_err(js)?;
    let sv = soft_value_iteration_from(&rewards, &env, gamma, 1.0, 1e-8, 100_000, None).map_err(js)?;
    to_json(&SoftPolicy { iterations: sv.iterations, values: sv.values.to_vec(), policy: Grid::of(&sv.policy) })
}

#[derive(Serialize)]
struct DetectionRun {
    users: usize,
    cells: usize,
    macro_f1: [f64; 3],
    recall_troll: f64,
    recall_organic: f64,
}

/// Simulates a labeled cohort and cross-validates an empirical-policy
/// classifier on it. Returns macro-F1 percentiles (5th, 50th, 95th).
#[wasm_bindgen]
pub fn simulate_and_detect(n_trolls: usize, n_organics: usize, len: usize, seed: u64) -> Result<String, JsError> {
    let cohort = synthetic_cohort(&CohortConfig { n_trolls, n_organics, len, seed, ..CohortConfig::default() }).map_err(js)?;
    let cfg = ExperimentConfig {
        methods: vec![Method::Empirical],
        repeats: 2,
        classifier: ClassifierConfig { bagged: ForestConfig { n_trees: 50, ..ForestConfig::default() }, ..ClassifierConfig::default() },
        master_seed: seed,
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&cohort.labeled(), None, &cfg).map_err(js)?;
    let s = report.summary.first().ok_or_else(|| js("cohort too small to evaluate"))?;
    to_json(&DetectionRun {
        users: s.users,
        cells: s.cells,
        macro_f1: [s.macro_f1.p5, s.macro_f1.p50, s.macro_f1.p95],
        recall_troll: s.recall_troll.p50,
        recall_organic: s.recall_organic.p50,
    })
}
