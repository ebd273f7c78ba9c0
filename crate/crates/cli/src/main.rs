//! `trollscope` command-line driver.
//!
//! Exit codes: 0 success, 1 usage, 2 validation, 3 runtime. Logs go to
//! standard error (`RUST_LOG` overrides the default `info` level); data goes
//! to files only.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trollscope::detect::experiment::Method;
use trollscope::Label;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "trollscope", version, about = "Behavioral policy inference and troll detection")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; flags take precedence over its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every stochastic choice.
    #[arg(long = "seed", global = true)]
    master_seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode an event log into per-user trajectories.
    Encode {
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Drop users with fewer events.
        #[arg(long)]
        min_events: Option<usize>,
    },
    /// Infer one policy per user.
    Infer {
        #[arg(long)]
        trajectories: Option<PathBuf>,
        /// empirical, maxent_irl or gail.
        #[arg(long, value_parser = parse_policy_method)]
        method: Option<Method>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a labeled synthetic cohort.
    Simulate {
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        n_trolls: Option<usize>,
        #[arg(long)]
        n_organics: Option<usize>,
        #[arg(long)]
        len: Option<usize>,
    },
    /// Run a cross-validated detection experiment.
    Experiment {
        /// Labeled trajectories; a synthetic cohort is generated when absent.
        #[arg(long)]
        trajectories: Option<PathBuf>,
        #[arg(long)]
        pool: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster policies with k-means.
    Cluster {
        #[arg(long)]
        policies: Option<PathBuf>,
        /// Trajectories supplying per-user state-visitation weights.
        #[arg(long)]
        trajectories: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        k_min: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        label: Option<Label>,
    },
    /// Inter-event timing summaries and weekday×hour heatmaps.
    Analytics {
        #[arg(long)]
        trajectories: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_policy_method(s: &str) -> Result<Method, String> {
    match s.parse::<Method>() {
        Ok(Method::Embedding) => Err("embedding does not produce a policy".into()),
        Ok(m) => Ok(m),
        Err(e) => Err(e.to_string()),
    }
}

fn run(top: Cli) -> Result<(), CliError> {
    let mut cfg = config::RunConfig::load(top.common.config.as_deref())?;
    if top.common.master_seed.is_some() {
        cfg.master_seed = top.common.master_seed;
    }
    fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
        if flag.is_some() {
            *slot = flag;
        }
    }
    match top.command {
        Command::Encode { events, out, min_events } => {
            set(&mut cfg.events, events);
            set(&mut cfg.out, out);
            set(&mut cfg.min_events, min_events);
            commands::encode(&cfg)
        }
        Command::Infer { trajectories, method, out } => {
            set(&mut cfg.trajectories, trajectories);
            set(&mut cfg.method, method);
            set(&mut cfg.out, out);
            commands::infer(&cfg)
        }
        Command::Simulate { out, n_trolls, n_organics, len } => {
            set(&mut cfg.out, out);
            cfg.cohort.n_trolls = n_trolls.unwrap_or(cfg.cohort.n_trolls);
            cfg.cohort.n_organics = n_organics.unwrap_or(cfg.cohort.n_organics);
            cfg.cohort.len = len.unwrap_or(cfg.cohort.len);
            commands::simulate(&cfg)
        }
        Command::Experiment { trajectories, pool, out } => {
            set(&mut cfg.trajectories, trajectories);
            set(&mut cfg.pool, pool);
            set(&mut cfg.out, out);
            commands::experiment(&cfg)
        }
        Command::Cluster { policies, trajectories, out, k, k_min, k_max, label } => {
            set(&mut cfg.policies, policies);
            set(&mut cfg.trajectories, trajectories);
            set(&mut cfg.out, out);
            set(&mut cfg.cluster.k, k);
            cfg.cluster.k_min = k_min.unwrap_or(cfg.cluster.k_min);
            cfg.cluster.k_max = k_max.unwrap_or(cfg.cluster.k_max);
            set(&mut cfg.cluster.label, label);
            commands::cluster(&cfg)
        }
        Command::Analytics { trajectories, out } => {
            set(&mut cfg.trajectories, trajectories);
            set(&mut cfg.out, out);
            commands::analytics(&cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let top = match Cli::try_parse() {
        Ok(t) => t,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(top) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
