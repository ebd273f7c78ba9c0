use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use trollscope::analytics::{temporal_summary, weekday_hour_heatmap, HeatmapMatrix};
use trollscope::cluster::{action_marginal, cluster_profiles, kmeans_restarts, select_k, silhouette_peak};
use trollscope::cohort::{synthetic_cohort, CohortConfig, Profile};
use trollscope::detect::experiment::{infer_policy, run_experiment, LabeledTrajectory, Method};
use trollscope::ingest::{encode_events, filter_min_activity, read_event_log};
use trollscope::io::{self, PolicyRecord};
use trollscope::policy::visitation_frequency;
use trollscope::simulate::EmbeddingPool;
use trollscope::{seed, Environment, Error, Label, Trajectory};

use crate::config::{provenance, ClusterParams, RunConfig};
use crate::error::CliError;

fn require<'a, T>(slot: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
    slot.as_ref().ok_or_else(|| CliError::Usage(format!("missing {flag}")))
}

fn require_file(slot: &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    let path = require(slot, flag)?;
    if !path.is_file() {
        return Err(CliError::Validation(format!("{flag} {} does not exist", path.display())));
    }
    Ok(path.clone())
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Validation(format!("cannot open {}: {e}", path.display())))
}

fn in_file<T>(path: &Path, r: trollscope::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::from(e).context(&path.display().to_string()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    in_file(path, io::write_atomic(path, bytes))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = require(&cfg.out, "--out")?.clone();
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn read_trajectories(path: &Path) -> Result<Vec<(Trajectory, Option<Label>)>, CliError> {
    in_file(path, io::read_trajectories(open(path)?))
}

pub fn encode(cfg: &RunConfig) -> Result<(), CliError> {
    let events = require_file(&cfg.events, "--events")?;
    let out = require(&cfg.out, "--out")?;
    let min_events = cfg.min_events.unwrap_or(0);
    let logs = in_file(&events, read_event_log(open(&events)?))?;
    if logs.is_empty() {
        log::warn!("{} holds no events", events.display());
    }
    let before = logs.len();
    let logs = filter_min_activity(logs, min_events);
    if logs.len() < before {
        log::info!("dropped {} users with fewer than {min_events} events", before - logs.len());
    }
    let mut users = Vec::with_capacity(logs.len());
    for log in &logs {
        match encode_events(log) {
            Ok(t) => {
                log::info!("{}: {} events, {} steps", log.user_id, log.events.len(), t.len());
                users.push((t, log.label));
            }
            Err(Error::EmptyLog) => log::warn!("{}: no own events; skipped", log.user_id),
            Err(e) => return Err(CliError::from(e).context(&log.user_id)),
        }
    }
    #[derive(Serialize)]
    struct Params {
        command: &'static str,
        min_events: usize,
    }
    let prov = provenance(&Params { command: "encode", min_events }, cfg.seed());
    let mut buf = Vec::new();
    io::write_trajectories(&mut buf, Some(&prov), &users)?;
    write(out, &buf)
}

pub fn infer(cfg: &RunConfig) -> Result<(), CliError> {
    let path = require_file(&cfg.trajectories, "--trajectories")?;
    let out = require(&cfg.out, "--out")?;
    let method = *require(&cfg.method, "--method")?;
    if method == Method::Embedding {
        return Err(CliError::Usage("embedding does not produce a policy".into()));
    }
    match method {
        Method::MaxentIrl => cfg.maxent.check()?,
        Method::Gail => cfg.gail.check()?,
        _ => {}
    }
    let users = read_trajectories(&path)?;
    let master = cfg.seed();
    let env = Environment::default();
    let fitted: Vec<_> = users
        .par_iter()
        .map(|(traj, label)| {
            let unit = seed::derive(master, &["infer", method.name(), &traj.user_id]);
            let r = infer_policy(method, traj, &env, &cfg.maxent, &cfg.gail, unit);
            (traj.user_id.clone(), *label, r)
        })
        .collect();
    let mut records = Vec::with_capacity(fitted.len());
    for (user_id, label, r) in fitted {
        match r {
            Ok(policy) => records.push(PolicyRecord { user_id, label, policy }),
            Err(e) => log::warn!("{user_id}: {method} failed: {e}"),
        }
    }
    if records.is_empty() && !users.is_empty() {
        return Err(CliError::Runtime(format!("{method} failed for every user")));
    }
    log::info!("{} of {} users fitted with {method}", records.len(), users.len());
    #[derive(Serialize)]
    struct Params<'a> {
        command: &'static str,
        method: Method,
        maxent: Option<&'a trollscope::irl::MaxEntConfig>,
        gail: Option<&'a trollscope::gail::GailConfig>,
    }
    let params = Params {
        command: "infer",
        method,
        maxent: (method == Method::MaxentIrl).then_some(&cfg.maxent),
        gail: (method == Method::Gail).then_some(&cfg.gail),
    };
    let prov = provenance(&params, master);
    let mut buf = Vec::new();
    io::write_policy_table(&mut buf, Some(&prov), &records)?;
    write(out, &buf)
}

#[derive(Serialize)]
struct Manifest<'a> {
    master_seed: u64,
    config_sha256: &'a str,
    cohort: &'a CohortConfig,
    users: Vec<ManifestUser<'a>>,
}

#[derive(Serialize)]
struct ManifestUser<'a> {
    user_id: &'a str,
    label: Label,
    profile: Profile,
    steps: usize,
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let cohort_cfg = CohortConfig { seed: cfg.seed(), ..cfg.cohort.clone() };
    let prov = provenance(&("simulate", &cohort_cfg), cfg.seed());
    let cohort = synthetic_cohort(&cohort_cfg)?;
    log::info!("generated {} users", cohort.users.len());

    let mut buf = Vec::new();
    io::write_event_log(&mut buf, Some(&prov), &cohort.event_logs())?;
    write(&dir.join("events.ndjson"), &buf)?;

    let labeled: Vec<_> = cohort.users.iter().map(|u| (u.trajectory.clone(), Some(u.label))).collect();
    buf.clear();
    io::write_trajectories(&mut buf, Some(&prov), &labeled)?;
    write(&dir.join("trajectories.ndjson"), &buf)?;

    buf.clear();
    io::write_pool(&mut buf, Some(&prov), &cohort.pool)?;
    write(&dir.join("pool.ndjson"), &buf)?;

    let records: Vec<_> = cohort
        .users
        .iter()
        .map(|u| PolicyRecord { user_id: u.trajectory.user_id.clone(), label: Some(u.label), policy: u.policy.clone() })
        .collect();
    buf.clear();
    io::write_policy_table(&mut buf, Some(&prov), &records)?;
    write(&dir.join("policies.csv"), &buf)?;

    let manifest = Manifest {
        master_seed: cfg.seed(),
        config_sha256: &prov.config_hash,
        cohort: &cohort_cfg,
        users: cohort
            .users
            .iter()
            .map(|u| ManifestUser { user_id: &u.trajectory.user_id, label: u.label, profile: u.profile, steps: u.trajectory.len() })
            .collect(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    json.push(b'\n');
    write(&dir.join("manifest.json"), &json)
}

pub fn experiment(cfg: &RunConfig) -> Result<(), CliError> {
    let trajectories = cfg.trajectories.as_ref().map(|_| require_file(&cfg.trajectories, "--trajectories")).transpose()?;
    let pool_path = cfg.pool.as_ref().map(|_| require_file(&cfg.pool, "--pool")).transpose()?;
    let dir = require(&cfg.out, "--out")?.clone();
    let mut ecfg = cfg.experiment.clone();
    ecfg.master_seed = cfg.seed();
    ecfg.check()?;

    let (data, pool): (Vec<LabeledTrajectory>, Option<EmbeddingPool>) = match &trajectories {
        Some(path) => {
            let users = read_trajectories(path)?;
            let data = users
                .into_iter()
                .map(|(trajectory, label)| match label {
                    Some(label) => Ok(LabeledTrajectory { trajectory, label }),
                    None => Err(CliError::Validation(format!("{}: user {} has no label", path.display(), trajectory.user_id))),
                })
                .collect::<Result<_, _>>()?;
            let pool = match &pool_path {
                Some(p) => Some(in_file(p, io::read_pool(open(p)?))?),
                None => None,
            };
            (data, pool)
        }
        None => {
            let cohort = synthetic_cohort(&CohortConfig { seed: cfg.seed(), ..cfg.cohort.clone() })?;
            log::info!("no --trajectories given; using a synthetic cohort of {} users", cohort.users.len());
            let pool = match &pool_path {
                Some(p) => Some(in_file(p, io::read_pool(open(p)?))?),
                None => Some(cohort.pool.clone()),
            };
            (cohort.labeled(), pool)
        }
    };
    let report = run_experiment(&data, pool.as_ref(), &ecfg)?;
    for s in &report.summary {
        log::info!(
            "{} {}={}: median macro-F1 {:.4} [{:.4}, {:.4}] over {} cells",
            s.method,
            report.sweep,
            s.sweep_param,
            s.macro_f1.p50,
            s.macro_f1.p5,
            s.macro_f1.p95,
            s.cells
        );
    }
    std::fs::create_dir_all(&dir)?;
    in_file(&dir, io::write_report(&dir, &report))?;
    log::info!("wrote report to {}", dir.display());
    Ok(())
}

pub fn cluster(cfg: &RunConfig) -> Result<(), CliError> {
    let path = require_file(&cfg.policies, "--policies")?;
    let weights_path = cfg.trajectories.as_ref().map(|_| require_file(&cfg.trajectories, "--trajectories")).transpose()?;
    let params: &ClusterParams = &cfg.cluster;
    let dir = out_dir(cfg)?;
    let mut records = in_file(&path, io::read_policy_table(open(&path)?))?;
    if let Some(l) = params.label {
        records.retain(|r| r.label == Some(l));
    }
    let weights: BTreeMap<String, [f64; trollscope::N_STATES]> = match &weights_path {
        Some(p) => read_trajectories(p)?
            .iter()
            .map(|(t, _)| Ok((t.user_id.clone(), visitation_frequency(t)?.state_marginal())))
            .collect::<trollscope::Result<_>>()?,
        None => BTreeMap::new(),
    };
    let x: Vec<Vec<f64>> = records.iter().map(|r| r.policy.flatten().to_vec()).collect();
    let marginals = records
        .iter()
        .map(|r| action_marginal(&r.policy, weights.get(&r.user_id)))
        .collect::<trollscope::Result<Vec<_>>>()?;
    let master = cfg.seed();
    let prov = provenance(&("cluster", params, weights_path.is_some()), master);

    let k = match params.k {
        Some(k) => k,
        None => {
            let hi = params.k_max.min(x.len().saturating_sub(1));
            let table = select_k(&x, params.k_min..=hi, master)?;
            for d in &table {
                log::info!("k={}: inertia {:.4}, silhouette {:.4}", d.k, d.inertia, d.silhouette);
            }
            write(&dir.join("k_selection.csv"), io::k_diagnostics_csv(Some(&prov), &table).as_bytes())?;
            silhouette_peak(&table).ok_or_else(|| CliError::Validation("empty k range".into()))?
        }
    };
    let result = kmeans_restarts(&x, k, params.restarts, master)?;
    log::info!("k={k}: inertia {:.4}, silhouette {:?}", result.inertia, result.silhouette_mean);
    let ids: Vec<String> = records.iter().map(|r| r.user_id.clone()).collect();
    write(&dir.join("assignments.csv"), io::assignments_csv(Some(&prov), &ids, &result.assignments)?.as_bytes())?;
    let profiles = cluster_profiles(&marginals, &result.assignments, k);
    write(&dir.join("profiles.csv"), io::cluster_profiles_csv(Some(&prov), &profiles).as_bytes())
}

pub fn analytics(cfg: &RunConfig) -> Result<(), CliError> {
    let path = require_file(&cfg.trajectories, "--trajectories")?;
    let dir = out_dir(cfg)?;
    let users = read_trajectories(&path)?;
    let prov = provenance(&"analytics", cfg.seed());
    let mut rows = Vec::new();
    let mut maps: BTreeMap<&str, HeatmapMatrix> = BTreeMap::new();
    for (traj, label) in &users {
        let Some(ts) = traj.timestamps.as_deref() else {
            log::warn!("{}: no timestamps; skipped", traj.user_id);
            continue;
        };
        let heat = weekday_hour_heatmap(ts);
        for key in ["all", label.map_or("unlabeled", Label::name)] {
            let merged = maps.get(key).map_or_else(|| heat.clone(), |m| m.merge(&heat));
            maps.insert(key, merged);
        }
        match temporal_summary(ts) {
            Ok(s) => rows.push((traj.user_id.clone(), *label, s)),
            Err(e) => log::warn!("{}: {e}; skipped", traj.user_id),
        }
    }
    write(&dir.join("temporal.csv"), io::temporal_summary_csv(Some(&prov), &rows)?.as_bytes())?;
    for (key, map) in &maps {
        let mut text = prov.line();
        text.push_str(&map.to_csv());
        write(&dir.join(format!("heatmap_{key}.csv")), text.as_bytes())?;
    }
    Ok(())
}
