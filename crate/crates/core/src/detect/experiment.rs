//! Evaluation protocols: per-user representation inference followed by
//! repeated stratified k-fold classification, optionally swept over
//! truncation length, noise fraction or hijack share.

use std::fmt;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::features::{embedding_features, policy_features, FeatureVector};
use super::folds::stratified_kfold;
use super::metrics::{metrics, Metrics};
use super::{predict, train_classifier, ClassifierConfig};
use crate::error::{Error, Result};
use crate::gail::{train_gail, GailConfig};
use crate::ingest::{truncate_first_n, Label};
use crate::irl::{train_maxent_irl, MaxEntConfig};
use crate::mdp::{Environment, Trajectory, UNIFORM_AGREEMENT};
use crate::par;
use crate::policy::{empirical_policy, Policy};
use crate::seed;
use crate::simulate::{
    hijack_kappa, mean_embedding, perturb_noise_with, sample_content_sequence_with, synthesize_hijack_with,
    ContentOwner, EmbeddingPool, HijackSpec, DEFAULT_HIJACK_LEN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Empirical,
    MaxentIrl,
    Gail,
    Embedding,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Empirical, Method::MaxentIrl, Method::Gail, Method::Embedding];

    pub fn name(self) -> &'static str {
        match self {
            Method::Empirical => "empirical",
            Method::MaxentIrl => "maxent_irl",
            Method::Gail => "gail",
            Method::Embedding => "embedding",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

/// Sweep grid. `first_n` entries of `null` mean the full trajectory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum Sweep {
    #[default]
    None,
    FirstN(Vec<Option<usize>>),
    NoiseP(Vec<f64>),
    HijackEta(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepPoint {
    None,
    FirstN(Option<usize>),
    NoiseP(f64),
    HijackEta(f64),
}

impl SweepPoint {
    /// Value written to the `sweep_param` column.
    pub fn label(&self) -> String {
        match self {
            SweepPoint::None => "none".into(),
            SweepPoint::FirstN(None) => "all".into(),
            SweepPoint::FirstN(Some(n)) => n.to_string(),
            SweepPoint::NoiseP(p) | SweepPoint::HijackEta(p) => format!("{p}"),
        }
    }
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Sweep::None => "none",
            Sweep::FirstN(_) => "first_n",
            Sweep::NoiseP(_) => "noise_p",
            Sweep::HijackEta(_) => "hijack_eta",
        }
    }

    pub fn points(&self) -> Vec<SweepPoint> {
        match self {
            Sweep::None => vec![SweepPoint::None],
            Sweep::FirstN(v) => v.iter().map(|n| SweepPoint::FirstN(*n)).collect(),
            Sweep::NoiseP(v) => v.iter().map(|p| SweepPoint::NoiseP(*p)).collect(),
            Sweep::HijackEta(v) => v.iter().map(|e| SweepPoint::HijackEta(*e)).collect(),
        }
    }

    fn check(&self) -> Result<()> {
        let ok = match self {
            Sweep::None => true,
            Sweep::FirstN(v) => !v.is_empty() && v.iter().all(|n| *n != Some(0)),
            Sweep::NoiseP(v) | Sweep::HijackEta(v) => !v.is_empty() && v.iter().all(|p| (0.0..=1.0).contains(p)),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid sweep grid {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    pub trajectory: Trajectory,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub sweep: Sweep,
    pub k: usize,
    pub repeats: usize,
    pub classifier: ClassifierConfig,
    pub maxent: MaxEntConfig,
    pub gail: GailConfig,
    /// Truncate each organic to the length of a randomly matched troll first.
    pub length_match: bool,
    pub hijack_len: usize,
    pub agreement_dist: [f64; 3],
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            methods: vec![Method::Empirical],
            sweep: Sweep::None,
            k: 5,
            repeats: 20,
            classifier: ClassifierConfig::default(),
            maxent: MaxEntConfig::default(),
            gail: GailConfig::default(),
            length_match: false,
            hijack_len: DEFAULT_HIJACK_LEN,
            agreement_dist: UNIFORM_AGREEMENT,
            master_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn check(&self) -> Result<()> {
        if self.methods.is_empty() || self.k < 2 || self.repeats == 0 || self.hijack_len == 0 {
            return Err(Error::InvalidConfig("experiment needs methods, k >= 2, repeats >= 1, hijack_len >= 1".into()));
        }
        self.sweep.check()?;
        self.classifier.check()?;
        if self.methods.contains(&Method::MaxentIrl) {
            self.maxent.check()?;
        }
        if self.methods.contains(&Method::Gail) {
            self.gail.check()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub method: Method,
    pub sweep_param: String,
    pub repeat: usize,
    pub fold: usize,
    pub macro_f1: f64,
    pub recall_troll: f64,
    pub recall_organic: f64,
    pub zero_division: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Percentiles {
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Percentiles {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Percentiles { p5: percentile(&v, 0.05), p50: percentile(&v, 0.5), p95: percentile(&v, 0.95) }
    }
}

/// Linear interpolation between order statistics at rank q·(n−1).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub sweep_param: String,
    pub cells: usize,
    pub users: usize,
    pub macro_f1: Percentiles,
    pub recall_troll: Percentiles,
    pub recall_organic: Percentiles,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub method: Option<Method>,
    pub sweep_param: String,
    /// Empty when the whole sweep point failed.
    pub user_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub sweep: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub rows: Vec<ReportRow>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<Failure>,
}

impl ExperimentReport {
    pub fn summary_for(&self, method: Method, sweep_param: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.method == method && s.sweep_param == sweep_param)
    }

    pub fn median(&self, method: Method, sweep_param: &str) -> Option<f64> {
        self.summary_for(method, sweep_param).map(|s| s.macro_f1.p50)
    }

    fn header(&self) -> String {
        format!("# config_sha256={} master_seed={} sweep={}\n", self.config_hash, self.master_seed, self.sweep)
    }

    pub fn rows_csv(&self) -> String {
        let mut out = self.header();
        out.push_str("method,sweep,sweep_param,repeat,fold,macro_f1,recall_troll,recall_organic,zero_division,seed\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.method, self.sweep, r.sweep_param, r.repeat, r.fold, r.macro_f1, r.recall_troll, r.recall_organic,
                r.zero_division, r.seed
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = self.header();
        out.push_str(
            "method,sweep,sweep_param,cells,users,macro_f1_p5,macro_f1_p50,macro_f1_p95,\
             recall_troll_p5,recall_troll_p50,recall_troll_p95,recall_organic_p5,recall_organic_p50,recall_organic_p95\n",
        );
        for s in &self.summary {
            let _ = write!(out, "{},{},{},{},{}", s.method, self.sweep, s.sweep_param, s.cells, s.users);
            for p in [s.macro_f1, s.recall_troll, s.recall_organic] {
                let _ = write!(out, ",{},{},{}", p.p5, p.p50, p.p95);
            }
            out.push('\n');
        }
        out
    }

    pub fn failures_csv(&self) -> String {
        let mut out = self.header();
        out.push_str("method,sweep_param,user_id,error\n");
        for f in &self.failures {
            let method = f.method.map(Method::name).unwrap_or("");
            let error = f.error.replace('"', "'");
            let _ = writeln!(out, "{},{},{},\"{}\"", method, f.sweep_param, f.user_id, error);
        }
        out
    }
}

/// One (repeat, fold) evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub repeat: usize,
    pub fold: usize,
    pub seed: u64,
    pub metrics: Metrics,
}

/// Repeated stratified k-fold over precomputed features. Splits come from
/// `fold_seed`; each cell's classifier seed is derived from `model_seed`.
pub fn cross_validate(
    features: &[FeatureVector],
    k: usize,
    repeats: usize,
    classifier: &ClassifierConfig,
    fold_seed: u64,
    model_seed: u64,
) -> Result<Vec<Cell>> {
    let labels: Vec<Label> = features.iter().map(|f| f.label).collect();
    let splits = stratified_kfold(&labels, k, repeats, fold_seed)?;
    par::map(&splits, |split| {
        let seed = seed::derive(model_seed, &[&split.repeat.to_string(), &split.fold.to_string()]);
        let x: Vec<Vec<f64>> = split.train.iter().map(|i| features[*i].values.clone()).collect();
        let y: Vec<Label> = split.train.iter().map(|i| labels[*i]).collect();
        let model = train_classifier(&x, &y, classifier, seed)?;
        let tx: Vec<Vec<f64>> = split.test.iter().map(|i| features[*i].values.clone()).collect();
        let ty: Vec<Label> = split.test.iter().map(|i| labels[*i]).collect();
        let pred = predict(&model, &tx)?;
        Ok(Cell { repeat: split.repeat, fold: split.fold, seed, metrics: metrics(&ty, &pred)? })
    })
    .into_iter()
    .collect()
}

/// A user's trajectory after sweep preprocessing, plus whose content pools
/// its steps draw from.
struct Prepared {
    trajectory: Trajectory,
    label: Label,
    content_organic: String,
    kappa: usize,
}

fn length_match(data: &[LabeledTrajectory], master: u64) -> Result<Vec<LabeledTrajectory>> {
    let troll_lens: Vec<usize> =
        data.iter().filter(|d| d.label == Label::Troll).map(|d| d.trajectory.len()).collect();
    if troll_lens.is_empty() {
        return Ok(data.to_vec());
    }
    data.iter()
        .map(|d| {
            if d.label == Label::Troll {
                return Ok(d.clone());
            }
            let mut rng = seed::stream(master, &["length_match", &d.trajectory.user_id]);
            let n = troll_lens[rng.random_range(0..troll_lens.len())];
            Ok(LabeledTrajectory { trajectory: truncate_first_n(&d.trajectory, n)?, label: d.label })
        })
        .collect()
}

fn prepare(
    point: SweepPoint,
    idx: usize,
    data: &[LabeledTrajectory],
    organics: &[usize],
    env: &Environment,
    cfg: &ExperimentConfig,
) -> Result<Prepared> {
    let item = &data[idx];
    let user = item.trajectory.user_id.as_str();
    let master = cfg.master_seed;
    let label = point.label();
    let keep = |trajectory: Trajectory| Prepared {
        trajectory,
        label: item.label,
        content_organic: user.to_string(),
        kappa: 0,
    };
    match point {
        SweepPoint::None | SweepPoint::FirstN(None) => Ok(keep(item.trajectory.clone())),
        SweepPoint::FirstN(Some(n)) => Ok(keep(truncate_first_n(&item.trajectory, n)?)),
        SweepPoint::NoiseP(p) => {
            let mut rng = seed::stream(master, &["noise", &label, user]);
            Ok(keep(perturb_noise_with(&item.trajectory, p, &mut rng)?))
        }
        SweepPoint::HijackEta(eta) => {
            if item.label == Label::Organic {
                return Ok(keep(item.trajectory.clone()));
            }
            if organics.is_empty() {
                return Err(Error::InvalidConfig("hijack sweep needs organic users".into()));
            }
            let mut pick = seed::stream(master, &["hijack_partner", user]);
            let partner = &data[organics[pick.random_range(0..organics.len())]].trajectory;
            let spec = HijackSpec {
                eta,
                len: cfg.hijack_len,
                organic: empirical_policy(partner)?,
                troll: empirical_policy(&item.trajectory)?,
            };
            let mut rng = seed::stream(master, &["hijack", &label, user]);
            let trajectory = synthesize_hijack_with(&spec, env, &mut rng, user)?;
            Ok(Prepared {
                trajectory,
                label: item.label,
                content_organic: partner.user_id.clone(),
                kappa: hijack_kappa(eta, cfg.hijack_len),
            })
        }
    }
}

/// Fits one user's policy. MaxEnt IRL and GAIL run in the environment
/// restarted from the trajectory's first state; `seed` replaces the seeds
/// inside both configs.
pub fn infer_policy(
    method: Method,
    traj: &Trajectory,
    env: &Environment,
    maxent: &MaxEntConfig,
    gail: &GailConfig,
    seed: u64,
) -> Result<Policy> {
    let user_env = || -> Result<Environment> {
        let first = traj.steps.first().ok_or(Error::EmptyTrajectory)?;
        env.with_initial_state(first.state)
    };
    match method {
        Method::Empirical => empirical_policy(traj),
        Method::MaxentIrl => {
            let mc = MaxEntConfig { seed, ..maxent.clone() };
            Ok(train_maxent_irl(traj, &user_env()?, &mc)?.policy)
        }
        Method::Gail => {
            let gc = GailConfig { seed, ..gail.clone() };
            Ok(train_gail(traj, &user_env()?, &gc)?.policy)
        }
        Method::Embedding => Err(Error::InvalidConfig("the embedding method does not produce a policy".into())),
    }
}

fn represent(
    method: Method,
    prepared: &Prepared,
    point_label: &str,
    env: &Environment,
    pool: Option<&EmbeddingPool>,
    cfg: &ExperimentConfig,
) -> Result<FeatureVector> {
    let traj = &prepared.trajectory;
    let user = traj.user_id.as_str();
    let unit_seed = seed::derive(cfg.master_seed, &[method.name(), point_label, user]);
    if method == Method::Embedding {
        let pool = pool.ok_or_else(|| Error::InvalidConfig("embedding method needs an embedding pool".into()))?;
        let organic = ContentOwner { pool, user: &prepared.content_organic };
        let troll = ContentOwner { pool, user };
        let mut rng = seed::rng(unit_seed);
        let seq = sample_content_sequence_with(traj, organic, troll, prepared.kappa, &mut rng)?;
        return Ok(embedding_features(mean_embedding(&seq)?, prepared.label, user));
    }
    let policy = infer_policy(method, traj, env, &cfg.maxent, &cfg.gail, unit_seed)?;
    Ok(policy_features(&policy, prepared.label, user))
}

/// Runs every method at every sweep point. Per-user failures are logged,
/// recorded and excluded; a sweep point whose survivors cannot be split into
/// folds is recorded as a failure without rows.
pub fn run_experiment(
    data: &[LabeledTrajectory],
    pool: Option<&EmbeddingPool>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.check()?;
    if data.is_empty() {
        return Err(Error::EmptyList);
    }
    if cfg.methods.contains(&Method::Embedding) && pool.is_none() {
        return Err(Error::InvalidConfig("embedding method needs an embedding pool".into()));
    }
    let env = Environment::new(*Environment::default().d0(), cfg.agreement_dist, Environment::default().gamma)?;
    let base = if cfg.length_match { length_match(data, cfg.master_seed)? } else { data.to_vec() };
    let organics: Vec<usize> = (0..base.len()).filter(|i| base[*i].label == Label::Organic).collect();
    let indices: Vec<usize> = (0..base.len()).collect();
    let fold_seed = seed::derive(cfg.master_seed, &["folds"]);

    let mut report = ExperimentReport {
        sweep: cfg.sweep.name().to_string(),
        config_hash: cfg.hash(),
        master_seed: cfg.master_seed,
        rows: Vec::new(),
        summary: Vec::new(),
        failures: Vec::new(),
    };

    for point in cfg.sweep.points() {
        let label = point.label();
        let prepared: Vec<Result<Prepared>> = par::map(&indices, |i| prepare(point, *i, &base, &organics, &env, cfg));
        let mut ready = Vec::with_capacity(prepared.len());
        for (i, p) in prepared.into_iter().enumerate() {
            match p {
                Ok(p) => ready.push(p),
                Err(e) => {
                    let user_id = base[i].trajectory.user_id.clone();
                    log::warn!("sweep {label}: preprocessing failed for {user_id}: {e}");
                    report.failures.push(Failure { method: None, sweep_param: label.clone(), user_id, error: e.to_string() });
                }
            }
        }

        for &method in &cfg.methods {
            log::info!("sweep {label}: inferring {method} representations for {} users", ready.len());
            let reps = par::map(&ready, |p| represent(method, p, &label, &env, pool, cfg));
            let mut features = Vec::with_capacity(reps.len());
            for (p, r) in ready.iter().zip(reps) {
                match r {
                    Ok(f) => features.push(f),
                    Err(e) => {
                        log::warn!("sweep {label}: {method} failed for {}: {e}", p.trajectory.user_id);
                        report.failures.push(Failure {
                            method: Some(method),
                            sweep_param: label.clone(),
                            user_id: p.trajectory.user_id.clone(),
                            error: e.to_string(),
                        });
                    }
                }
            }
            let model_seed = seed::derive(cfg.master_seed, &["classifier", method.name(), &label]);
            let cells = match cross_validate(&features, cfg.k, cfg.repeats, &cfg.classifier, fold_seed, model_seed) {
                Ok(c) => c,
                Err(e) => {
                    log::warn!("sweep {label}: {method} evaluation failed: {e}");
                    report.failures.push(Failure {
                        method: Some(method),
                        sweep_param: label.clone(),
                        user_id: String::new(),
                        error: e.to_string(),
                    });
                    continue;
                }
            };
            let f1: Vec<f64> = cells.iter().map(|c| c.metrics.macro_f1).collect();
            let rt: Vec<f64> = cells.iter().map(|c| c.metrics.troll.recall).collect();
            let ro: Vec<f64> = cells.iter().map(|c| c.metrics.organic.recall).collect();
            report.summary.push(SummaryRow {
                method,
                sweep_param: label.clone(),
                cells: cells.len(),
                users: features.len(),
                macro_f1: Percentiles::of(&f1),
                recall_troll: Percentiles::of(&rt),
                recall_organic: Percentiles::of(&ro),
            });
            report.rows.extend(cells.into_iter().map(|c| ReportRow {
                method,
                sweep_param: label.clone(),
                repeat: c.repeat,
                fold: c.fold,
                macro_f1: c.metrics.macro_f1,
                recall_troll: c.metrics.troll.recall,
                recall_organic: c.metrics.organic.recall,
                zero_division: c.metrics.zero_division,
                seed: c.seed,
            }));
        }
    }
    Ok(report)
}
