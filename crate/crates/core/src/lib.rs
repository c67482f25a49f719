//! Edge-cloud simulator and task-offloading schedulers for multi-user mobile
//! AR workflows.
//!
//! The crate is organised bottom-up: [`workflow`] builds per-frame task graphs,
//! [`infra`] models hosts and links, [`sim`] executes assignments one interval
//! at a time, [`objective`] scores intervals, [`schedulers`] decides placements
//! (including the look-ahead tree search), and [`scenario`] / [`experiment`]
//! drive whole runs whose results [`metrics`] aggregates.

pub mod api;
pub mod config;
pub mod experiment;
pub mod infra;
pub mod metrics;
pub mod objective;
pub mod rng;
pub mod scenario;
pub mod schedulers;
pub mod sim;
pub mod time;
pub mod workflow;

pub use config::ExperimentConfig;
pub use infra::{ClusterState, HostId, HostSpec, Tier};
pub use metrics::RunReport;
pub use objective::{Objective, QosIndicators, QosWeights};
pub use rng::SeedStream;
pub use schedulers::SchedulerKind;
pub use sim::{Assignment, Decision, IntervalReport, SimState};
pub use time::Nanos;
pub use workflow::{ComponentKind, TaskId, TaskSpec, UserId, WorkflowInstance, WorkloadProfile};
