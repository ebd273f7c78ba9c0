//! Run configuration: a JSON file whose keys mirror the command-line flags.
//! Defaults < config file < flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trollscope::cohort::CohortConfig;
use trollscope::detect::experiment::{ExperimentConfig, Method};
use trollscope::gail::GailConfig;
use trollscope::io::Provenance;
use trollscope::irl::MaxEntConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub policies: Option<PathBuf>,
    pub min_events: Option<usize>,
    pub method: Option<Method>,
    pub maxent: MaxEntConfig,
    pub gail: GailConfig,
    pub cohort: CohortConfig,
    pub experiment: ExperimentConfig,
    pub cluster: ClusterParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    pub k_min: usize,
    pub k_max: usize,
    /// Fixes k instead of taking the silhouette peak.
    pub k: Option<usize>,
    pub restarts: usize,
    /// Restrict clustering to users carrying this label.
    pub label: Option<trollscope::Label>,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams { k_min: 2, k_max: 8, k: None, restarts: trollscope::cluster::DEFAULT_RESTARTS, label: None }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    pub fn seed(&self) -> u64 {
        self.master_seed.unwrap_or(0)
    }
}

/// SHA-256 over the canonical JSON of the resolved parameters of a command.
pub fn provenance<T: Serialize>(params: &T, master_seed: u64) -> Provenance {
    let json = serde_json::to_string(params).expect("parameters serialize");
    Provenance { config_hash: hex::encode(Sha256::digest(json.as_bytes())), master_seed }
}
