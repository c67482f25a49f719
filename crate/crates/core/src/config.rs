//! The experiment config file: one TOML document with a table per module.
//!
//! Every field has a default, so an empty file is a valid config. Unknown keys
//! and out-of-range values are all reported together, each by dotted key path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::infra::{FleetConfig, NetworkSpec};
use crate::objective::ObjectiveConfig;
use crate::scenario::Scenario;
use crate::schedulers::{GeneticParams, MmctParams, SchedulerKind, SchedulerParams};
use crate::sim::SimConfig;
use crate::workflow::WorkloadProfile;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

impl ConfigError {
    /// Individual problems, one per line of the message.
    pub fn messages(&self) -> Vec<String> {
        match self {
            ConfigError::Invalid(list) => list.clone(),
            other => vec![other.to_string()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSection {
    pub schedulers: Vec<SchedulerKind>,
    pub seeds: Vec<u64>,
    /// Intervals per run; unset means frames plus the drain period.
    pub horizon: Option<u32>,
    /// Directory results are written to.
    pub output: PathBuf,
    /// User counts for sweeps.
    pub users: Vec<u32>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            schedulers: SchedulerKind::ALL.to_vec(),
            seeds: vec![0, 1],
            horizon: None,
            output: PathBuf::from("results"),
            users: vec![5, 10, 20, 40],
        }
    }
}

impl ExperimentSection {
    fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if self.schedulers.is_empty() {
            out.push(("schedulers".into(), "must not be empty".into()));
        }
        if self.seeds.is_empty() {
            out.push(("seeds".into(), "must not be empty".into()));
        }
        if self.users.is_empty() {
            out.push(("users".into(), "must not be empty".into()));
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub workload: WorkloadProfile,
    pub cluster: FleetConfig,
    pub network: NetworkSpec,
    pub objective: ObjectiveConfig,
    pub sim: SimConfig,
    pub mmct: MmctParams,
    pub genetic: GeneticParams,
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    /// All range violations as `"<key.path> <problem>"`.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut add = |section: &str, list: Vec<(String, String)>| {
            out.extend(list.into_iter().map(|(k, msg)| format!("{section}.{k} {msg}")));
        };
        add("workload", self.workload.violations());
        if self.cluster.edge_hosts + self.cluster.cloud_hosts == 0 {
            add("cluster", vec![("edge_hosts".into(), "fleet must have at least one host".into())]);
        }
        add("cluster.edge", self.cluster.edge.violations());
        add("cluster.cloud", self.cluster.cloud.violations());
        add("network", self.network.violations());
        add("objective", self.objective.violations());
        if !(0.0..=1.0).contains(&self.sim.migration_state_fraction) {
            add("sim", vec![("migration_state_fraction".into(), "out of [0,1]".into())]);
        }
        add("mmct", self.mmct.violations());
        add("genetic", self.genetic.violations());
        add("experiment", self.experiment.violations());
        out
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            workload: self.workload.clone(),
            cluster: self.cluster.clone(),
            network: self.network,
            objective: self.objective.clone(),
            sim: self.sim,
            params: SchedulerParams {
                mmct: self.mmct.clone(),
                genetic: self.genetic.clone(),
            },
            horizon: self.experiment.horizon,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parses and validates config text, collecting every problem.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut errors = Vec::new();
    let de = match toml::de::Deserializer::parse(text) {
        Ok(de) => de,
        Err(e) => return Err(ConfigError::Invalid(vec![format!("syntax error: {}", e.message())])),
    };
    let mut unknown = Vec::new();
    let mut track = |path: serde_ignored::Path<'_>| unknown.push(path.to_string());
    let ignored = serde_ignored::Deserializer::new(de, &mut track);
    let parsed: Result<ExperimentConfig, _> = serde_path_to_error::deserialize(ignored);
    errors.extend(unknown.into_iter().map(|k| format!("unknown key {k}")));
    match parsed {
        Ok(cfg) => {
            errors.extend(cfg.violations());
            if errors.is_empty() {
                Ok(cfg)
            } else {
                Err(ConfigError::Invalid(errors))
            }
        }
        Err(e) => {
            let path = e.path().to_string();
            errors.push(format!("{path}: {}", e.into_inner().message()));
            Err(ConfigError::Invalid(errors))
        }
    }
}

pub fn validate_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
