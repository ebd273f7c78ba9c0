//! Synthetic labeled cohorts: troll users drawn around three behavioral
//! archetypes, organic users around a reply-dominant profile, with bursty
//! timestamps and Gaussian content-embedding pools.

use rand::Rng;
use rand_distr::{Dirichlet, Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::detect::experiment::LabeledTrajectory;
use crate::error::{Error, Result};
use crate::ingest::{decode_trajectory, Label, UserEventLog};
use crate::mdp::{Action, Environment, Trajectory, N_ACTIONS, N_STATES, UNIFORM_AGREEMENT};
use crate::policy::{Policy, PolicySource};
use crate::seed::{self, StreamRng};
use crate::simulate::{rollout_named, EmbeddingPool};

/// Action marginals in `Action::ALL` order: WR, CT, RC, PR+, PR~, PR-.
pub const TROLL_ARCHETYPES: [[f64; N_ACTIONS]; 3] = [
    // Thread creators.
    [0.080, 0.846, 0.040, 0.034 / 3.0, 0.034 / 3.0, 0.034 / 3.0],
    // Root commenters.
    [0.100, 0.100, 0.725, 0.025, 0.025, 0.025],
    // Mixed posters with little replying.
    [0.293, 0.344, 0.240, 0.041, 0.041, 0.041],
];

/// Trolls whose behavior mirrors organic users: little thread creation,
/// mostly replies.
pub const MIMIC_PROFILE: [f64; N_ACTIONS] = [0.0, 0.041, 0.184, 0.775 / 3.0, 0.775 / 3.0, 0.775 / 3.0];

/// Relative archetype sizes (50, 31 and 18 of 99 accounts).
pub const ARCHETYPE_WEIGHTS: [f64; 3] = [50.0 / 99.0, 31.0 / 99.0, 18.0 / 99.0];

/// Share of trolls drawn around [`MIMIC_PROFILE`] (3 of 99 accounts).
pub const MIMIC_FRACTION: f64 = 3.0 / 99.0;

/// Reply-dominant organic profile.
pub const ORGANIC_PROFILE: [f64; N_ACTIONS] = [0.100, 0.041, 0.084, 0.300, 0.250, 0.225];

/// Per-gap probabilities of a burst (< 60 s) and of dormancy (> 72 h).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub burst: f64,
    pub dormancy: f64,
}

pub const TROLL_TIMING: Timing = Timing { burst: 0.252, dormancy: 0.044 };
pub const ORGANIC_TIMING: Timing = Timing { burst: 0.128, dormancy: 0.013 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub n_trolls: usize,
    /// Relative troll archetype sizes; counts use largest remainders.
    pub archetype_weights: [f64; 3],
    pub mimic_fraction: f64,
    pub n_organics: usize,
    pub len: usize,
    /// Dirichlet concentration of a user's base row around their archetype.
    pub user_concentration: f64,
    /// Dirichlet concentration of each state's row around the user's base row.
    pub state_concentration: f64,
    pub troll_timing: Timing,
    pub organic_timing: Timing,
    /// First timestamps fall uniformly within a year from this epoch second.
    pub start_epoch: i64,
    pub embedding_dim: usize,
    pub embeddings_per_action: usize,
    /// Scale of the per-(class, action) embedding means.
    pub class_separation: f64,
    /// Scale of each user's offset from their class mean.
    pub user_spread: f64,
    pub embedding_noise: f64,
    pub agreement_dist: [f64; 3],
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_trolls: 100,
            archetype_weights: ARCHETYPE_WEIGHTS,
            mimic_fraction: MIMIC_FRACTION,
            n_organics: 400,
            len: 100,
            user_concentration: 40.0,
            state_concentration: 40.0,
            troll_timing: TROLL_TIMING,
            organic_timing: ORGANIC_TIMING,
            start_epoch: 1_451_606_400,
            embedding_dim: 16,
            embeddings_per_action: 8,
            class_separation: 0.5,
            user_spread: 0.5,
            embedding_noise: 1.0,
            agreement_dist: UNIFORM_AGREEMENT,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Index into [`TROLL_ARCHETYPES`].
    Archetype(usize),
    Mimic,
    Organic,
}

impl Profile {
    pub fn row(self) -> &'static [f64; N_ACTIONS] {
        match self {
            Profile::Archetype(a) => &TROLL_ARCHETYPES[a],
            Profile::Mimic => &MIMIC_PROFILE,
            Profile::Organic => &ORGANIC_PROFILE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUser {
    pub label: Label,
    pub profile: Profile,
    pub policy: Policy,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub users: Vec<SyntheticUser>,
    pub pool: EmbeddingPool,
}

impl Cohort {
    pub fn labeled(&self) -> Vec<LabeledTrajectory> {
        self.users.iter().map(|u| LabeledTrajectory { trajectory: u.trajectory.clone(), label: u.label }).collect()
    }

    pub fn event_logs(&self) -> Vec<UserEventLog> {
        self.users.iter().map(|u| decode_trajectory(&u.trajectory, Some(u.label))).collect()
    }

    pub fn trolls(&self) -> impl Iterator<Item = &SyntheticUser> {
        self.users.iter().filter(|u| u.label == Label::Troll)
    }
}

fn dirichlet_around<R: Rng + ?Sized>(mean: &[f64; N_ACTIONS], concentration: f64, rng: &mut R) -> Result<[f64; N_ACTIONS]> {
    let alpha = mean.map(|m| (m * concentration).max(0.01));
    let d = Dirichlet::new(alpha).map_err(|e| Error::InvalidConfig(format!("dirichlet: {e}")))?;
    let mut row = d.sample(rng);
    // Renormalize away rounding so rows pass the stochasticity check.
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= s);
    Ok(row)
}

/// A user policy: base row around `profile`, then one row per state around
/// the base.
pub fn sample_user_policy<R: Rng + ?Sized>(
    profile: &[f64; N_ACTIONS],
    user_concentration: f64,
    state_concentration: f64,
    rng: &mut R,
) -> Result<Policy> {
    let base = dirichlet_around(profile, user_concentration, rng)?;
    let mut rows = [[0.0; N_ACTIONS]; N_STATES];
    for row in rows.iter_mut() {
        *row = dirichlet_around(&base, state_concentration, rng)?;
    }
    Policy::from_rows(rows, PolicySource::Scripted)
}

/// One gap in seconds drawn from the burst / ordinary / dormancy mixture.
pub fn sample_gap<R: Rng + ?Sized>(timing: &Timing, rng: &mut R) -> i64 {
    let u: f64 = rng.random();
    if u < timing.burst {
        rng.random_range(1..60)
    } else if u < timing.burst + timing.dormancy {
        let extra = Exp::new(1.0 / 172_800.0).expect("positive rate").sample(rng);
        259_201 + extra as i64
    } else {
        // Log-uniform between one minute and 72 hours.
        let lo = 60f64.ln();
        let hi = 259_200f64.ln();
        (rng.random_range(lo..hi).exp().round() as i64).clamp(60, 259_200)
    }
}

fn timestamps(n: usize, timing: &Timing, start: i64, rng: &mut StreamRng) -> Vec<i64> {
    let mut t = start + rng.random_range(0..365 * 86_400);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            t += sample_gap(timing, rng);
        }
        out.push(t);
    }
    out
}

fn normal_vec<R: Rng + ?Sized>(dim: usize, sd: f64, rng: &mut R) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    (0..dim).map(|_| sd * n.sample(rng)).collect()
}

/// Splits `total` by `weights` with the largest-remainder rule.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|a, b| (quotas[*b] - quotas[*b].floor()).total_cmp(&(quotas[*a] - quotas[*a].floor())).then(a.cmp(b)));
    let short = total - counts.iter().sum::<usize>();
    for i in order.into_iter().take(short) {
        counts[i] += 1;
    }
    counts
}

/// Troll profiles in user order: archetype blocks first, then mimics.
fn troll_profiles(cfg: &CohortConfig) -> Result<Vec<Profile>> {
    if !(0.0..=1.0).contains(&cfg.mimic_fraction) || cfg.archetype_weights.iter().any(|w| *w < 0.0) {
        return Err(Error::InvalidConfig("cohort mimic_fraction must lie in [0,1] and weights be non-negative".into()));
    }
    let mimics = (cfg.n_trolls as f64 * cfg.mimic_fraction).round() as usize;
    let rest = cfg.n_trolls - mimics.min(cfg.n_trolls);
    if rest > 0 && cfg.archetype_weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidConfig("cohort archetype weights must have a positive sum".into()));
    }
    let mut out = Vec::with_capacity(cfg.n_trolls);
    if rest > 0 {
        for (a, n) in apportion(rest, &cfg.archetype_weights).into_iter().enumerate() {
            out.extend(std::iter::repeat_n(Profile::Archetype(a), n));
        }
    }
    out.extend(std::iter::repeat_n(Profile::Mimic, cfg.n_trolls - out.len()));
    Ok(out)
}

pub fn synthetic_cohort(cfg: &CohortConfig) -> Result<Cohort> {
    if cfg.len == 0 || cfg.user_concentration <= 0.0 || cfg.state_concentration <= 0.0 {
        return Err(Error::InvalidConfig("cohort needs len >= 1 and positive concentrations".into()));
    }
    let env = Environment::new(*Environment::default().d0(), cfg.agreement_dist, Environment::default().gamma)?;
    let mut pool = EmbeddingPool::new(cfg.embedding_dim)?;
    let mut means_rng = seed::stream(cfg.seed, &["cohort", "embedding_means"]);
    let class_means: Vec<Vec<Vec<f64>>> = (0..2)
        .map(|_| Action::ALL.iter().map(|_| normal_vec(cfg.embedding_dim, cfg.class_separation, &mut means_rng)).collect())
        .collect();

    let profiles = troll_profiles(cfg)?;
    let mut users = Vec::with_capacity(cfg.n_trolls + cfg.n_organics);
    let everyone = profiles.into_iter().chain(std::iter::repeat_n(Profile::Organic, cfg.n_organics));
    for (i, profile) in everyone.enumerate() {
        let troll = i < cfg.n_trolls;
        let (label, user_id) = if troll {
            (Label::Troll, format!("troll_{i:04}"))
        } else {
            (Label::Organic, format!("organic_{:04}", i - cfg.n_trolls))
        };
        let mut rng = seed::stream(cfg.seed, &["cohort", "user", &user_id]);
        let policy = sample_user_policy(profile.row(), cfg.user_concentration, cfg.state_concentration, &mut rng)?;
        let mut trajectory = rollout_named(&policy, &env, cfg.len, &mut rng, &user_id);
        let timing = if troll { &cfg.troll_timing } else { &cfg.organic_timing };
        trajectory.timestamps = Some(timestamps(cfg.len + 1, timing, cfg.start_epoch, &mut rng));

        let class = &class_means[usize::from(troll)];
        for a in Action::ALL {
            let offset = normal_vec(cfg.embedding_dim, cfg.user_spread, &mut rng);
            for _ in 0..cfg.embeddings_per_action {
                let noise = normal_vec(cfg.embedding_dim, cfg.embedding_noise, &mut rng);
                let v = class[a.index()].iter().zip(&offset).zip(noise).map(|((m, o), e)| m + o + e).collect();
                pool.insert(&user_id, a, v)?;
            }
        }
        users.push(SyntheticUser { label, profile, policy, trajectory });
    }
    Ok(Cohort { users, pool })
}
