//! Batches of runs: scheduler comparisons and user-count sweeps.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::metrics::RunReport;
use crate::scenario::{run_scenario, ScenarioError};
use crate::schedulers::SchedulerKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub scheduler: SchedulerKind,
    pub seed: u64,
    pub users: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub scheduler: SchedulerKind,
    pub seed: u64,
    pub users: u32,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    /// Sorted by scheduler name, users, seed.
    pub reports: Vec<RunReport>,
    pub failures: Vec<CellFailure>,
}

impl BatchResult {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }
}

/// One run with the config's settings and the cell's users count.
pub fn run_cell(cfg: &ExperimentConfig, cell: Cell) -> Result<RunReport, ScenarioError> {
    let mut scenario = cfg.scenario();
    scenario.workload.users = cell.users;
    run_scenario(&scenario, cell.scheduler, cell.seed)
}

fn sort_key(scheduler: SchedulerKind, users: u32, seed: u64) -> (&'static str, u32, u64) {
    (scheduler.name(), users, seed)
}

/// Runs every cell on up to `jobs` threads. Each cell derives its own random
/// streams from its seed, so results do not depend on execution order.
pub fn run_batch(cfg: &ExperimentConfig, cells: &[Cell], jobs: usize) -> BatchResult {
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(cells.len()));
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&cell) = cells.get(i) else { break };
        let outcome = run_cell(cfg, cell);
        results.lock().expect("no panics while holding the lock").push((cell, outcome));
    };
    let jobs = jobs.clamp(1, cells.len().max(1));
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }
    let mut out = BatchResult::default();
    for (cell, outcome) in results.into_inner().expect("workers joined") {
        match outcome {
            Ok(r) => out.reports.push(r),
            Err(e) => out.failures.push(CellFailure {
                scheduler: cell.scheduler,
                seed: cell.seed,
                users: cell.users,
                error: e.to_string(),
            }),
        }
    }
    out.reports.sort_by(|a, b| sort_key(a.scheduler, a.users, a.seed).cmp(&sort_key(b.scheduler, b.users, b.seed)));
    out.failures.sort_by(|a, b| sort_key(a.scheduler, a.users, a.seed).cmp(&sort_key(b.scheduler, b.users, b.seed)));
    out
}

/// Schedulers × seeds at the config's user count.
pub fn compare(cfg: &ExperimentConfig, schedulers: &[SchedulerKind], seeds: &[u64], jobs: usize) -> BatchResult {
    let users = cfg.workload.users;
    let cells: Vec<Cell> = schedulers
        .iter()
        .flat_map(|&scheduler| seeds.iter().map(move |&seed| Cell { scheduler, seed, users }))
        .collect();
    run_batch(cfg, &cells, jobs)
}

/// Users × schedulers × seeds.
pub fn sweep(
    cfg: &ExperimentConfig,
    users: &[u32],
    schedulers: &[SchedulerKind],
    seeds: &[u64],
    jobs: usize,
) -> BatchResult {
    let mut cells = Vec::with_capacity(users.len() * schedulers.len() * seeds.len());
    for &u in users {
        for &scheduler in schedulers {
            for &seed in seeds {
                cells.push(Cell { scheduler, seed, users: u });
            }
        }
    }
    run_batch(cfg, &cells, jobs)
}
