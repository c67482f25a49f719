//! Drives one scheduler through a whole workload, interval by interval.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::infra::{ClusterState, FleetConfig, InfraError, NetworkSpec};
use crate::metrics::RunReport;
use crate::objective::{Objective, ObjectiveConfig, ObjectiveError};
use crate::rng::{derive_seed, SeedStream};
use crate::schedulers::{schedule, ScheduleContext, ScheduleError, SchedulerKind, SchedulerParams};
use crate::sim::{IntervalReport, Phase, SimConfig, SimState};
use crate::workflow::{generate_workload, WorkflowError, WorkflowInstance, WorkloadProfile};

const WORKLOAD_SALT: u64 = 1;
const MOBILITY_SALT: u64 = 2;
const SCHEDULER_SALT: u64 = 3;

/// Intervals simulated past the last release when no horizon is set; enough
/// for the loosest deadline (four frame periods) to expire.
pub const DRAIN_INTERVALS: u32 = 4;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Infra(#[from] InfraError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("scheduler {scheduler} failed at interval {interval}: {source}")]
    Schedule {
        scheduler: SchedulerKind,
        interval: u64,
        source: ScheduleError,
    },
}

/// Everything a run needs besides the scheduler kind and seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub workload: WorkloadProfile,
    pub cluster: FleetConfig,
    pub network: NetworkSpec,
    pub objective: ObjectiveConfig,
    pub sim: SimConfig,
    pub params: SchedulerParams,
    /// Number of intervals; `None` means frames plus [`DRAIN_INTERVALS`].
    pub horizon: Option<u32>,
}

impl Scenario {
    pub fn horizon(&self) -> u32 {
        self.horizon
            .unwrap_or_else(|| self.workload.frames.saturating_add(DRAIN_INTERVALS))
    }

    /// The workflow instances a run with `seed` releases, in release order.
    pub fn workload_for(&self, seed: u64) -> Result<Vec<WorkflowInstance>, WorkflowError> {
        generate_workload(&self.workload, derive_seed(seed, WORKLOAD_SALT))
    }
}

/// What one call to [`Runner::step`] did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub interval: u64,
    pub released: u64,
    pub assigned: usize,
    pub completed: usize,
    pub deadline_misses: u32,
    pub migrations: u32,
    pub energy_j: f64,
    pub q: f64,
    pub schedule_time_ms: f64,
}

/// Stepwise run of one `(scenario, scheduler, seed)` triple.
pub struct Runner {
    kind: SchedulerKind,
    seed: u64,
    params: SchedulerParams,
    horizon: u64,
    state: SimState,
    objective: Objective,
    workload: Vec<WorkflowInstance>,
    next_release: usize,
    mobility: SeedStream,
    report: RunReport,
}

impl Runner {
    pub fn new(scenario: &Scenario, kind: SchedulerKind, seed: u64) -> Result<Runner, ScenarioError> {
        let workload = scenario.workload_for(seed)?;
        let users = scenario.workload.users;
        let cluster = ClusterState::new(scenario.cluster.hosts()?, scenario.network, users)?;
        let window = scenario.workload.frame_period();
        let objective = scenario.objective.resolve(&cluster, window)?;
        Ok(Runner {
            kind,
            seed,
            params: scenario.params.clone(),
            horizon: scenario.horizon() as u64,
            state: SimState::new(cluster, window, scenario.sim),
            objective,
            workload,
            next_release: 0,
            mobility: SeedStream::new(derive_seed(seed, MOBILITY_SALT)),
            report: RunReport::new(kind, seed, users),
        })
    }

    pub fn kind(&self) -> SchedulerKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Total intervals this run will simulate.
    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn report(&self) -> &RunReport {
        &self.report
    }

    pub fn is_finished(&self) -> bool {
        self.state.interval_index() >= self.horizon
    }

    /// Runs one interval; `None` once the horizon is reached.
    pub fn step(&mut self) -> Result<Option<StepSummary>, ScenarioError> {
        self.step_with(|_| {})
    }

    /// Like [`step`](Self::step), also handing the raw interval report to `observe`.
    pub fn step_with(&mut self, observe: impl FnOnce(&IntervalReport)) -> Result<Option<StepSummary>, ScenarioError> {
        if self.is_finished() {
            return Ok(None);
        }
        let interval = self.state.interval_index();
        let now = self.state.clock();
        let mut released = 0u64;
        while let Some(inst) = self.workload.get(self.next_release) {
            if inst.release > now {
                break;
            }
            released += inst.offloadable_count() as u64;
            self.state.release(inst);
            self.next_release += 1;
        }
        self.state.cluster_mut().mobility_step(&mut self.mobility);

        let pending = self.state.schedulable();
        let ctx = ScheduleContext::new(&self.state, &pending, &self.objective);
        let mut rng = SeedStream::new(derive_seed(self.seed, SCHEDULER_SALT)).substream(interval);
        let started = Instant::now();
        let assignment =
            schedule(self.kind, &ctx, &self.params, &mut rng).map_err(|source| ScenarioError::Schedule {
                scheduler: self.kind,
                interval,
                source,
            })?;
        let elapsed: Duration = started.elapsed();
        let report = self
            .state
            .simulate_interval(&assignment)
            .map_err(|e| ScenarioError::Schedule {
                scheduler: self.kind,
                interval,
                source: e.into(),
            })?;
        self.report.accumulate(&report, released, elapsed);
        observe(&report);
        let summary = StepSummary {
            interval,
            released,
            assigned: assignment.len(),
            completed: report.offloadable_completions().count(),
            deadline_misses: report.deadline_misses,
            migrations: report.migrations,
            energy_j: report.energy_j(),
            q: self.objective.q(&report.indicators(), report.window_tasks),
            schedule_time_ms: elapsed.as_secs_f64() * 1e3,
        };
        if self.is_finished() {
            self.close();
        }
        Ok(Some(summary))
    }

    /// Horizon bookkeeping: tasks still live are dropped (if placed) or
    /// pending (if never placed), and those not yet past their deadline are
    /// charged as SLA violations.
    fn close(&mut self) {
        for t in self.state.tasks().iter().filter(|t| t.is_offloadable()) {
            match t.phase() {
                Phase::Done => continue,
                Phase::Unassigned => self.report.tasks_pending += 1,
                _ => self.report.tasks_dropped += 1,
            }
            if !t.sla_missed() {
                self.report.sla_violations += 1;
            }
        }
    }

    pub fn finish(mut self) -> Result<RunReport, ScenarioError> {
        while self.step()?.is_some() {}
        Ok(self.report)
    }
}

/// Runs a whole scenario and returns its aggregate report.
pub fn run_scenario(scenario: &Scenario, kind: SchedulerKind, seed: u64) -> Result<RunReport, ScenarioError> {
    Runner::new(scenario, kind, seed)?.finish()
}

/// As [`run_scenario`], passing every interval report to `observe`.
pub fn run_scenario_observed(
    scenario: &Scenario,
    kind: SchedulerKind,
    seed: u64,
    mut observe: impl FnMut(&IntervalReport),
) -> Result<RunReport, ScenarioError> {
    let mut runner = Runner::new(scenario, kind, seed)?;
    while runner.step_with(&mut observe)?.is_some() {}
    Ok(runner.report)
}
