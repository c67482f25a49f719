//! Scheduling policies behind one interface.
//!
//! Every scheduler receives a snapshot of the simulator and the tasks that
//! need a decision this interval, and returns a total assignment over them.
//! All randomness comes from the supplied [`SeedStream`], so each policy is a
//! pure function of `(snapshot, pending, params, seed)`.

pub mod genetic;
pub mod greedy;
pub mod mmct;
pub mod random;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::infra::HostId;
use crate::objective::Objective;
use crate::rng::SeedStream;
use crate::sim::{Assignment, Decision, IntervalReport, SimError, SimState};
use crate::workflow::TaskId;

pub use genetic::GeneticParams;
pub use mmct::MmctParams;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("no hosts")]
    NoHosts,
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Genetic,
    Greedy,
    MctsPlain,
    Mmct,
    Random,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 5] = [
        SchedulerKind::Mmct,
        SchedulerKind::MctsPlain,
        SchedulerKind::Greedy,
        SchedulerKind::Random,
        SchedulerKind::Genetic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Mmct => "mmct",
            SchedulerKind::MctsPlain => "mcts_plain",
            SchedulerKind::Greedy => "greedy",
            SchedulerKind::Random => "random",
            SchedulerKind::Genetic => "genetic",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown scheduler `{0}`; valid kinds: mmct, mcts_plain, greedy, random, genetic")]
pub struct UnknownScheduler(pub String);

impl FromStr for SchedulerKind {
    type Err = UnknownScheduler;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownScheduler(s.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SchedulerParams {
    pub mmct: MmctParams,
    pub genetic: GeneticParams,
}

/// What a scheduler sees for one interval.
#[derive(Clone, Copy)]
pub struct ScheduleContext<'a> {
    pub state: &'a SimState,
    pub pending: &'a [TaskId],
    pub objective: &'a Objective,
}

impl<'a> ScheduleContext<'a> {
    pub fn new(state: &'a SimState, pending: &'a [TaskId], objective: &'a Objective) -> Self {
        Self {
            state,
            pending,
            objective,
        }
    }

    pub fn hosts(&self) -> Vec<HostId> {
        self.state.cluster().host_ids()
    }

    /// Forks the snapshot, applies `decisions`, and runs one interval.
    pub fn probe(&self, decisions: &[Decision]) -> Result<(SimState, IntervalReport), SimError> {
        let mut fork = self.state.probe();
        fork.apply(decisions)?;
        let report = fork.advance();
        Ok((fork, report))
    }

    /// Objective value `Y` of one probed interval.
    pub fn probe_y(&self, decisions: &[Decision]) -> Result<f64, SimError> {
        let (_, r) = self.probe(decisions)?;
        Ok(self.objective.y(&r.indicators(), r.window_tasks))
    }

    fn check(&self) -> Result<(), ScheduleError> {
        if !self.pending.is_empty() && self.state.cluster().hosts.is_empty() {
            return Err(ScheduleError::NoHosts);
        }
        let open = self.state.schedulable();
        for t in self.pending {
            if open.binary_search(t).is_err() {
                return Err(SimError::InvalidAssignment(format!("task {t} is not schedulable")).into());
            }
        }
        Ok(())
    }
}

/// Dispatches to the policy named by `kind`.
pub fn schedule(
    kind: SchedulerKind,
    ctx: &ScheduleContext<'_>,
    params: &SchedulerParams,
    rng: &mut SeedStream,
) -> Result<Assignment, ScheduleError> {
    ctx.check()?;
    if ctx.pending.is_empty() {
        return Ok(Assignment::new());
    }
    match kind {
        SchedulerKind::Random => Ok(random::random_schedule(ctx, rng)),
        SchedulerKind::Greedy => greedy::greedy_schedule(ctx),
        SchedulerKind::Genetic => genetic::ga_schedule(ctx, &params.genetic, rng),
        SchedulerKind::Mmct => Ok(mmct::mmct_schedule(ctx, &params.mmct, rng)?.assignment),
        SchedulerKind::MctsPlain => Ok(mmct::mcts_plain_schedule(ctx, &params.mmct, rng)?.assignment),
    }
}
