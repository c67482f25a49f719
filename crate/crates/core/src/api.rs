//! JSON bodies exchanged between the experiment server and its clients.
//!
//! Configs travel as TOML text so the server applies the same parsing and
//! validation as a local file. Scheduler names travel as strings so an unknown
//! name is reported with the list of valid kinds.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::experiment::BatchResult;
use crate::metrics::RunReport;
use crate::scenario::StepSummary;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidateRequest {
    #[serde(default)]
    pub config: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidateResponse {
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ExperimentConfig>,
    #[serde(default)]
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRequest {
    #[serde(default)]
    pub config: String,
    pub scheduler: String,
    #[serde(default)]
    pub seed: u64,
}

/// Unset lists fall back to the config's `experiment` section.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompareRequest {
    #[serde(default)]
    pub config: String,
    #[serde(default)]
    pub schedulers: Option<Vec<String>>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    /// Worker threads; unset means all available cores.
    #[serde(default)]
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRequest {
    #[serde(default)]
    pub config: String,
    #[serde(default)]
    pub users: Option<Vec<u32>>,
    #[serde(default)]
    pub schedulers: Option<Vec<String>>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub jobs: Option<usize>,
}

pub type BatchResponse = BatchResult;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRequest {
    #[serde(default)]
    pub config: String,
    pub scheduler: String,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: u64,
    pub scheduler: String,
    pub seed: u64,
    /// Next interval to run.
    pub interval: u64,
    pub horizon: u64,
    pub finished: bool,
    pub report: RunReport,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRequest {
    #[serde(default = "one")]
    pub intervals: u32,
}

impl Default for StepRequest {
    fn default() -> Self {
        Self { intervals: 1 }
    }
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub steps: Vec<StepSummary>,
    pub finished: bool,
}

/// Body of every non-2xx response.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}
