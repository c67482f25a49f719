//! Deterministic discrete-event engine for one scheduling interval at a time.
//!
//! Every offloadable task uploads its input from the user's device, waits in
//! its host's FIFO queue for a core, computes, and sends its output back down.
//! Upload starts only once all predecessor outputs have reached the device.
//! Local renderers run on the device after their last predecessor delivers.
//!
//! [`SimState`] is a plain value: forking for look-ahead is a `clone`, and the
//! cost of that clone is linear in live tasks and hosts. History (completions,
//! traces) leaves the state through [`IntervalReport`] instead of accumulating
//! in it.

use std::cell::RefCell;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::infra::{migration_cost, transfer_time, ClusterState, HostId, Route};
use crate::objective::QosIndicators;
use crate::time::Nanos;
use crate::workflow::{ComponentKind, TaskId, TaskSpec, UserId, WorkflowInstance};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Let schedulers re-place queued and blocked tasks, not only running ones.
    pub reschedule_queued: bool,
    /// Share of a task's produced output carried along on migration.
    pub migration_state_fraction: f64,
    /// Emit [`TraceEvent`]s in interval reports.
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            reschedule_queued: false,
            migration_state_fraction: 0.5,
            trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Decision {
    pub task: TaskId,
    pub host: HostId,
}

impl Decision {
    pub fn new(task: TaskId, host: HostId) -> Self {
        Self { task, host }
    }
}

/// Task to host mapping for one interval. Pending tasks left out keep their
/// current placement.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment(BTreeMap<TaskId, HostId>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, task: TaskId, host: HostId) -> Option<HostId> {
        self.0.insert(task, host)
    }

    pub fn get(&self, task: TaskId) -> Option<HostId> {
        self.0.get(&task).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn decisions(&self) -> Vec<Decision> {
        self.0.iter().map(|(t, h)| Decision::new(*t, *h)).collect()
    }
}

impl FromIterator<Decision> for Assignment {
    fn from_iter<I: IntoIterator<Item = Decision>>(iter: I) -> Self {
        Assignment(iter.into_iter().map(|d| (d.task, d.host)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    /// Released, never placed.
    Unassigned,
    /// Placed, waiting for predecessor outputs before uploading.
    Blocked { host: HostId },
    /// Input upload or migration transfer in flight.
    Transit { host: HostId, arrive: Nanos },
    Queued { host: HostId, ready: Nanos },
    Running { host: HostId, since: Nanos },
    Downlink { deliver: Nanos },
    LocalWait,
    LocalRun { done: Nanos },
    Done,
}

impl Phase {
    pub fn host(&self) -> Option<HostId> {
        match *self {
            Phase::Blocked { host }
            | Phase::Transit { host, .. }
            | Phase::Queued { host, .. }
            | Phase::Running { host, .. } => Some(host),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiveTask {
    id: TaskId,
    user: UserId,
    kind: ComponentKind,
    length_mi: f64,
    input_bits: f64,
    output_bits: f64,
    device_time: Nanos,
    /// Index into the state's spec arena.
    slot: u32,
    release: Nanos,
    due: Nanos,
    preds_left: u32,
    phase: Phase,
    remaining_mi: f64,
    transmission: Nanos,
    connection: Nanos,
    computation: Nanos,
    first_host: Option<HostId>,
    last_host: Option<HostId>,
    migrations: u32,
    sla_missed: bool,
}

impl LiveTask {
    pub fn id(&self) -> TaskId {
        self.id
    }

    pub fn kind(&self) -> ComponentKind {
        self.kind
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn release(&self) -> Nanos {
        self.release
    }

    /// Absolute deadline.
    pub fn due(&self) -> Nanos {
        self.due
    }

    pub fn remaining_mi(&self) -> f64 {
        self.remaining_mi
    }

    /// Host the task last ran or was placed on.
    pub fn host(&self) -> Option<HostId> {
        self.last_host
    }

    pub fn is_offloadable(&self) -> bool {
        self.kind.is_offloadable()
    }

    /// Whether a deadline miss has already been recorded.
    pub fn sla_missed(&self) -> bool {
        self.sla_missed
    }

    pub fn predecessors_pending(&self) -> u32 {
        self.preds_left
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Release,
    Assign,
    Upload,
    Migrate,
    Arrive,
    Start,
    Finish,
    Deliver,
    DeadlineMiss,
}

impl TraceKind {
    fn as_str(self) -> &'static str {
        match self {
            TraceKind::Release => "release",
            TraceKind::Assign => "assign",
            TraceKind::Upload => "upload",
            TraceKind::Migrate => "migrate",
            TraceKind::Arrive => "arrive",
            TraceKind::Start => "start",
            TraceKind::Finish => "finish",
            TraceKind::Deliver => "deliver",
            TraceKind::DeadlineMiss => "deadline_miss",
        }
    }
}

/// One trace line: `<time_ns>\t<kind>\t<task>\t<host|->`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: Nanos,
    pub kind: TraceKind,
    pub task: TaskId,
    pub host: Option<HostId>,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t", self.time.0, self.kind.as_str(), self.task.0)?;
        match self.host {
            Some(h) => write!(f, "{}", h.0),
            None => write!(f, "-"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub task: TaskId,
    pub user: UserId,
    pub kind: ComponentKind,
    pub release: Nanos,
    pub finish: Nanos,
    pub transmission: Nanos,
    pub connection: Nanos,
    pub queuing: Nanos,
    pub computation: Nanos,
    pub first_host: Option<HostId>,
    pub host: Option<HostId>,
    pub migrations: u32,
    pub sla_missed: bool,
}

impl CompletionRecord {
    pub fn response(&self) -> Nanos {
        self.finish - self.release
    }

    pub fn is_offloadable(&self) -> bool {
        self.kind.is_offloadable()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub interval: u64,
    pub start: Nanos,
    pub end: Nanos,
    pub completions: Vec<CompletionRecord>,
    /// Offloadable tasks live at some point in the window.
    pub window_tasks: u32,
    /// Mean over those tasks of response (if completed here) or age at window end.
    pub window_ars_s: f64,
    pub transmission_energy_j: f64,
    pub computation_energy_j: f64,
    pub migrations: u32,
    pub migration_time: Nanos,
    pub deadline_misses: u32,
    pub utilization: Vec<f64>,
    pub trace: Vec<TraceEvent>,
}

impl IntervalReport {
    pub fn energy_j(&self) -> f64 {
        self.transmission_energy_j + self.computation_energy_j
    }

    pub fn util_variance(&self) -> f64 {
        let n = self.utilization.len();
        if n == 0 {
            return 0.0;
        }
        let mean = self.utilization.iter().sum::<f64>() / n as f64;
        self.utilization.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / n as f64
    }

    pub fn indicators(&self) -> QosIndicators {
        QosIndicators {
            ars_s: self.window_ars_s,
            aec_j: self.energy_j(),
            hc_util_variance: self.util_variance(),
            hc_migrations: self.migrations,
            sla: self.deadline_misses,
        }
    }

    pub fn offloadable_completions(&self) -> impl Iterator<Item = &CompletionRecord> {
        self.completions.iter().filter(|c| c.is_offloadable())
    }
}

/// Accounting done while applying decisions, reported by the next advance.
#[derive(Clone, Debug, Default, PartialEq)]
struct Staged {
    tx_energy_j: f64,
    migrations: u32,
    migration_time: Nanos,
    trace: Vec<TraceEvent>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    cluster: ClusterState,
    /// Sorted by task id.
    tasks: Vec<LiveTask>,
    /// Specs of every task ever released, indexed by `LiveTask::slot`.
    specs: Arc<Vec<TaskSpec>>,
    interval_len: Nanos,
    interval_index: u64,
    config: SimConfig,
    staged: Staged,
    /// Skip per-task completion records; used by look-ahead forks.
    lean: bool,
}

impl SimState {
    pub fn new(cluster: ClusterState, interval_len: Nanos, config: SimConfig) -> Self {
        Self {
            cluster,
            tasks: Vec::new(),
            specs: Arc::new(Vec::new()),
            interval_len,
            interval_index: 0,
            config,
            staged: Staged::default(),
            lean: false,
        }
    }

    /// Independent copy for look-ahead.
    pub fn fork(&self) -> SimState {
        self.clone()
    }

    /// A fork whose reports carry no completion records or trace; the
    /// aggregate indicators are unchanged.
    pub fn probe(&self) -> SimState {
        let mut s = self.clone();
        s.lean = true;
        s.config.trace = false;
        s.staged.trace.clear();
        s
    }

    pub fn spec(&self, task: &LiveTask) -> &TaskSpec {
        &self.specs[task.slot as usize]
    }

    pub fn cluster(&self) -> &ClusterState {
        &self.cluster
    }

    pub fn cluster_mut(&mut self) -> &mut ClusterState {
        &mut self.cluster
    }

    pub fn clock(&self) -> Nanos {
        self.cluster.clock
    }

    pub fn interval_index(&self) -> u64 {
        self.interval_index
    }

    pub fn interval_len(&self) -> Nanos {
        self.interval_len
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn set_trace(&mut self, on: bool) {
        self.config.trace = on;
    }

    pub fn tasks(&self) -> &[LiveTask] {
        &self.tasks
    }

    pub fn task(&self, id: TaskId) -> Option<&LiveTask> {
        self.index_of(id).map(|i| &self.tasks[i])
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    fn index_of(&self, id: TaskId) -> Option<usize> {
        self.tasks.binary_search_by_key(&id, |t| t.id).ok()
    }

    /// Running and queued counts on a host.
    pub fn occupancy(&self, host: HostId) -> (u32, u32) {
        self.tasks.iter().fold((0, 0), |(r, q), t| match t.phase {
            Phase::Running { host: h, .. } if h == host => (r + 1, q),
            Phase::Queued { host: h, .. } if h == host => (r, q + 1),
            _ => (r, q),
        })
    }

    /// Adds an instance's tasks. Instances must arrive in id order.
    pub fn release(&mut self, instance: &WorkflowInstance) {
        debug_assert!(instance.release <= self.cluster.clock, "instance released ahead of the clock");
        let mut specs: Vec<&TaskSpec> = instance.tasks.iter().collect();
        specs.sort_by_key(|t| t.id);
        for spec in specs {
            debug_assert!(self.tasks.last().is_none_or(|t| t.id < spec.id));
            let preds_left = spec.predecessors.len() as u32;
            let phase = match (spec.kind.local_only(), preds_left) {
                (false, _) => Phase::Unassigned,
                (true, 0) => Phase::LocalRun {
                    done: instance.release + spec.device_time,
                },
                (true, _) => Phase::LocalWait,
            };
            if self.config.trace {
                self.staged.trace.push(TraceEvent {
                    time: instance.release,
                    kind: TraceKind::Release,
                    task: spec.id,
                    host: None,
                });
            }
            let specs = Arc::make_mut(&mut self.specs);
            let slot = specs.len() as u32;
            specs.push(spec.clone());
            self.tasks.push(LiveTask {
                id: spec.id,
                user: spec.user,
                kind: spec.kind,
                length_mi: spec.length_mi,
                input_bits: spec.input_bits,
                output_bits: spec.output_bits,
                device_time: spec.device_time,
                slot,
                release: instance.release,
                due: instance.release + spec.deadline,
                preds_left,
                phase,
                remaining_mi: spec.length_mi,
                transmission: Nanos::ZERO,
                connection: Nanos::ZERO,
                computation: Nanos::ZERO,
                first_host: None,
                last_host: None,
                migrations: 0,
                sla_missed: false,
            });
        }
    }

    fn is_schedulable(&self, t: &LiveTask) -> bool {
        t.is_offloadable()
            && match t.phase {
                Phase::Unassigned | Phase::Running { .. } => true,
                Phase::Queued { .. } | Phase::Blocked { .. } => self.config.reschedule_queued,
                _ => false,
            }
    }

    /// Whether `id` may receive a decision now.
    pub fn can_schedule(&self, id: TaskId) -> bool {
        self.task(id).is_some_and(|t| self.is_schedulable(t))
    }

    /// Tasks a scheduler may place this interval, in id order.
    pub fn schedulable(&self) -> Vec<TaskId> {
        self.tasks
            .iter()
            .filter(|t| self.is_schedulable(t))
            .map(|t| t.id)
            .collect()
    }

    pub fn apply_assignment(&mut self, assignment: &Assignment) -> Result<(), SimError> {
        self.apply(&assignment.decisions())
    }

    /// Applies decisions at the current clock. Validates everything before
    /// mutating, so an error leaves the state untouched.
    pub fn apply(&mut self, decisions: &[Decision]) -> Result<(), SimError> {
        let mut targets = Vec::with_capacity(decisions.len());
        for d in decisions {
            let idx = self
                .index_of(d.task)
                .ok_or_else(|| SimError::InvalidAssignment(format!("unknown task {}", d.task)))?;
            if self.cluster.host(d.host).is_none() {
                return Err(SimError::InvalidAssignment(format!("unknown host {}", d.host.0)));
            }
            if !self.is_schedulable(&self.tasks[idx]) {
                return Err(SimError::InvalidAssignment(format!("task {} is not schedulable", d.task)));
            }
            targets.push((idx, d.host));
        }
        let mut seen: Vec<usize> = targets.iter().map(|(i, _)| *i).collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(SimError::InvalidAssignment("task assigned twice".into()));
        }
        let now = self.cluster.clock;
        for (idx, host) in targets {
            self.place(idx, host, now);
        }
        Ok(())
    }

    fn place(&mut self, idx: usize, host: HostId, now: Nanos) {
        let trace = self.config.trace;
        let task = &mut self.tasks[idx];
        match task.phase {
            Phase::Unassigned => {
                task.first_host.get_or_insert(host);
                task.last_host = Some(host);
                if trace {
                    self.staged.trace.push(TraceEvent {
                        time: now,
                        kind: TraceKind::Assign,
                        task: task.id,
                        host: Some(host),
                    });
                }
                if task.preds_left > 0 {
                    task.phase = Phase::Blocked { host };
                } else {
                    let (arrive, energy, ev) = start_upload(&self.cluster, task, host, now, trace);
                    self.staged.tx_energy_j += energy;
                    self.staged.trace.extend(ev);
                    debug_assert!(arrive >= now);
                }
            }
            Phase::Blocked { host: from } if from != host => {
                task.phase = Phase::Blocked { host };
                task.last_host = Some(host);
            }
            Phase::Running { host: from, .. } | Phase::Queued { host: from, .. } if from != host => {
                let src = &self.cluster.hosts[from.index()];
                let dst = &self.cluster.hosts[host.index()];
                task.last_host = Some(host);
                if src.tier == dst.tier {
                    task.phase = Phase::Queued { host, ready: now };
                    return;
                }
                let progress = 1.0 - task.remaining_mi / task.length_mi;
                let bits = task.input_bits
                    + self.config.migration_state_fraction * task.output_bits * progress.clamp(0.0, 1.0);
                let (duration, energy) = migration_cost(bits, src, dst, &self.cluster.net);
                task.transmission += duration - dst.connection_time;
                task.connection += dst.connection_time;
                task.migrations += 1;
                task.phase = Phase::Transit { host, arrive: now + duration };
                self.staged.migrations += 1;
                self.staged.migration_time += duration;
                self.staged.tx_energy_j += energy;
                if trace {
                    self.staged.trace.push(TraceEvent {
                        time: now,
                        kind: TraceKind::Migrate,
                        task: task.id,
                        host: Some(host),
                    });
                }
            }
            _ => {}
        }
    }

    /// Applies the assignment, then runs one interval.
    pub fn simulate_interval(&mut self, assignment: &Assignment) -> Result<IntervalReport, SimError> {
        self.apply_assignment(assignment)?;
        Ok(self.advance())
    }

    /// Runs the engine from the current clock to the end of the interval.
    pub fn advance(&mut self) -> IntervalReport {
        let t0 = self.cluster.clock;
        let t1 = t0 + self.interval_len;
        let staged = std::mem::take(&mut self.staged);
        let mut buffers = BUFFERS.with(|b| std::mem::take(&mut *b.borrow_mut()));
        let hosts = self.cluster.hosts.len();
        buffers.reset(hosts);
        for (i, t) in self.tasks.iter().enumerate() {
            match t.phase {
                Phase::Transit { arrive, .. } => buffers.events.push(Reverse((arrive, i))),
                Phase::Queued { host, ready } => buffers.queues[host.index()].push(Reverse((ready, t.id, i))),
                Phase::Running { host, since } => {
                    buffers.running[host.index()] += 1;
                    let h = &self.cluster.hosts[host.index()];
                    buffers.events.push(Reverse((since + h.compute_time(t.remaining_mi), i)));
                }
                Phase::Downlink { deliver } => buffers.events.push(Reverse((deliver, i))),
                Phase::LocalRun { done } => buffers.events.push(Reverse((done, i))),
                _ => {}
            }
        }
        let mut engine = Engine::new(&self.cluster, &self.specs, buffers, self.config.trace, !self.lean);
        engine.tx_energy_j = staged.tx_energy_j;
        engine.trace = staged.trace;
        for h in 0..hosts {
            engine.try_start(&mut self.tasks, h, t0);
        }

        while let Some(&Reverse((now, _))) = engine.events.peek() {
            if now >= t1 {
                break;
            }
            engine.touched.clear();
            while let Some(&Reverse((at, i))) = engine.events.peek() {
                if at != now {
                    break;
                }
                engine.events.pop();
                engine.handle(&mut self.tasks, i, now);
            }
            let mut touched = std::mem::take(&mut engine.touched);
            touched.sort_unstable();
            touched.dedup();
            for &h in &touched {
                engine.try_start(&mut self.tasks, h, now);
            }
            engine.touched = touched;
        }

        // Bring running tasks up to the window end, record deadline misses
        // for tasks still in flight and sum the window response indicator
        // (completed response or current age).
        let mut misses = engine.misses;
        let mut ars_sum = engine.ars_done_s;
        let mut window_tasks = engine.done_offloadable;
        for t in self.tasks.iter_mut() {
            if let Phase::Running { host, since } = t.phase {
                let h = &self.cluster.hosts[host.index()];
                let elapsed = t1 - since;
                t.computation += elapsed;
                engine.busy[host.index()] += elapsed;
                t.remaining_mi = (t.remaining_mi - h.mips_per_core * elapsed.as_secs_f64()).max(0.0);
                t.phase = Phase::Running { host, since: t1 };
            }
            if !t.is_offloadable() || t.phase == Phase::Done {
                continue;
            }
            window_tasks += 1;
            ars_sum += (t1 - t.release).as_secs_f64();
            if !t.sla_missed && t1 > t.due {
                t.sla_missed = true;
                misses += 1;
                if engine.tracing {
                    engine.trace.push(TraceEvent {
                        time: t1,
                        kind: TraceKind::DeadlineMiss,
                        task: t.id,
                        host: t.last_host,
                    });
                }
            }
        }

        let window_s = self.interval_len.as_secs_f64();
        let mut computation_energy_j = 0.0;
        let mut utilization = Vec::with_capacity(hosts);
        for (h, busy) in self.cluster.hosts.iter().zip(&engine.busy) {
            let util = busy.as_secs_f64() / (h.cores as f64 * window_s);
            utilization.push(util);
            computation_energy_j += h.idle_power_w * window_s + (h.busy_power_w - h.idle_power_w) * util * window_s;
        }

        let Engine {
            completions,
            tx_energy_j,
            trace,
            busy,
            events,
            queues,
            running,
            touched,
            ..
        } = engine;
        let report = IntervalReport {
            interval: self.interval_index,
            start: t0,
            end: t1,
            completions,
            window_tasks,
            window_ars_s: if window_tasks == 0 {
                0.0
            } else {
                ars_sum / window_tasks as f64
            },
            transmission_energy_j: tx_energy_j,
            computation_energy_j,
            migrations: staged.migrations,
            migration_time: staged.migration_time,
            deadline_misses: misses,
            utilization,
            trace,
        };

        for (acc, b) in self.cluster.busy.iter_mut().zip(&busy) {
            *acc += *b;
        }
        BUFFERS.with(|b| {
            *b.borrow_mut() = Buffers {
                events: events.into_vec(),
                queues: queues.into_iter().map(BinaryHeap::into_vec).collect(),
                running,
                busy,
                touched,
            }
        });
        self.tasks.retain(|t| t.phase != Phase::Done);
        self.cluster.clock = t1;
        self.interval_index += 1;
        report
    }
}

/// Begins the input upload; returns arrival time, radio energy and trace.
fn start_upload(
    cluster: &ClusterState,
    task: &mut LiveTask,
    host: HostId,
    now: Nanos,
    trace: bool,
) -> (Nanos, f64, Option<TraceEvent>) {
    let h = &cluster.hosts[host.index()];
    let route = Route::uplink(h.tier);
    let latency = cluster.user_latency(task.user);
    let up = transfer_time(task.input_bits, route, &cluster.net, latency);
    let airtime = transfer_time(task.input_bits, route, &cluster.net, Nanos::ZERO);
    task.transmission += up;
    task.connection += h.connection_time;
    let arrive = now + up + h.connection_time;
    task.phase = Phase::Transit { host, arrive };
    let ev = trace.then_some(TraceEvent {
        time: now,
        kind: TraceKind::Upload,
        task: task.id,
        host: Some(host),
    });
    (arrive, route.tx_power_w(&cluster.net) * airtime.as_secs_f64(), ev)
}

/// Allocations reused across `advance` calls on one thread.
#[derive(Default)]
struct Buffers {
    events: Vec<Reverse<(Nanos, usize)>>,
    queues: Vec<Vec<Reverse<(Nanos, TaskId, usize)>>>,
    running: Vec<u32>,
    busy: Vec<Nanos>,
    touched: Vec<usize>,
}

impl Buffers {
    fn reset(&mut self, hosts: usize) {
        self.events.clear();
        self.queues.resize_with(hosts, Vec::new);
        self.queues.iter_mut().for_each(Vec::clear);
        self.running.clear();
        self.running.resize(hosts, 0);
        self.busy.clear();
        self.busy.resize(hosts, Nanos::ZERO);
        self.touched.clear();
    }
}

thread_local! {
    static BUFFERS: RefCell<Buffers> = RefCell::new(Buffers::default());
}

/// Scratch state for one `advance` call.
struct Engine<'c> {
    cluster: &'c ClusterState,
    specs: &'c [TaskSpec],
    events: BinaryHeap<Reverse<(Nanos, usize)>>,
    queues: Vec<BinaryHeap<Reverse<(Nanos, TaskId, usize)>>>,
    running: Vec<u32>,
    busy: Vec<Nanos>,
    touched: Vec<usize>,
    record: bool,
    completions: Vec<CompletionRecord>,
    done_offloadable: u32,
    ars_done_s: f64,
    tx_energy_j: f64,
    misses: u32,
    tracing: bool,
    trace: Vec<TraceEvent>,
}

impl<'c> Engine<'c> {
    fn new(cluster: &'c ClusterState, specs: &'c [TaskSpec], buffers: Buffers, tracing: bool, record: bool) -> Self {
        Self {
            cluster,
            specs,
            events: BinaryHeap::from(buffers.events),
            queues: buffers.queues.into_iter().map(BinaryHeap::from).collect(),
            running: buffers.running,
            busy: buffers.busy,
            touched: buffers.touched,
            record,
            completions: Vec::new(),
            done_offloadable: 0,
            ars_done_s: 0.0,
            tx_energy_j: 0.0,
            misses: 0,
            tracing,
            trace: Vec::new(),
        }
    }

    fn emit(&mut self, time: Nanos, kind: TraceKind, task: TaskId, host: Option<HostId>) {
        if self.tracing {
            self.trace.push(TraceEvent { time, kind, task, host });
        }
    }

    fn handle(&mut self, tasks: &mut [LiveTask], i: usize, now: Nanos) {
        match tasks[i].phase {
            Phase::Transit { host, arrive } => {
                debug_assert_eq!(arrive, now);
                tasks[i].phase = Phase::Queued { host, ready: now };
                self.queues[host.index()].push(Reverse((now, tasks[i].id, i)));
                self.touched.push(host.index());
                self.emit(now, TraceKind::Arrive, tasks[i].id, Some(host));
            }
            Phase::Running { host, since } => {
                let h = &self.cluster.hosts[host.index()];
                let t = &mut tasks[i];
                let elapsed = now - since;
                t.computation += elapsed;
                self.busy[host.index()] += elapsed;
                self.running[host.index()] -= 1;
                t.remaining_mi = 0.0;
                let route = Route::downlink(h.tier);
                let down = transfer_time(t.output_bits, route, &self.cluster.net, Nanos::ZERO);
                t.transmission += down;
                self.tx_energy_j += route.tx_power_w(&self.cluster.net) * down.as_secs_f64();
                t.phase = Phase::Downlink { deliver: now + down };
                self.events.push(Reverse((now + down, i)));
                self.touched.push(host.index());
                let id = t.id;
                self.emit(now, TraceKind::Finish, id, Some(host));
            }
            Phase::Downlink { .. } => self.complete(tasks, i, now),
            Phase::LocalRun { .. } => {
                tasks[i].computation += tasks[i].device_time;
                self.complete(tasks, i, now);
            }
            _ => {}
        }
    }

    fn complete(&mut self, tasks: &mut [LiveTask], i: usize, now: Nanos) {
        let t = &mut tasks[i];
        t.phase = Phase::Done;
        if t.is_offloadable() && now > t.due && !t.sla_missed {
            t.sla_missed = true;
            self.misses += 1;
        }
        let response = now - t.release;
        let accounted = t.transmission + t.connection + t.computation;
        debug_assert!(accounted <= response, "{} > {}", accounted, response);
        if t.is_offloadable() {
            self.done_offloadable += 1;
            self.ars_done_s += response.as_secs_f64();
        }
        if self.record {
            self.completions.push(CompletionRecord {
                task: t.id,
                user: t.user,
                kind: t.kind,
                release: t.release,
                finish: now,
                transmission: t.transmission,
                connection: t.connection,
                queuing: response.saturating_sub(accounted),
                computation: t.computation,
                first_host: t.first_host,
                host: t.last_host,
                migrations: t.migrations,
                sla_missed: t.sla_missed,
            });
        }
        let id = t.id;
        let host = t.last_host;
        let specs = self.specs;
        self.emit(now, TraceKind::Deliver, id, host);

        for succ in &specs[t.slot as usize].successors {
            let Ok(j) = tasks.binary_search_by_key(succ, |t| t.id) else {
                continue;
            };
            let s = &mut tasks[j];
            s.preds_left = s.preds_left.saturating_sub(1);
            if s.preds_left > 0 {
                continue;
            }
            match s.phase {
                Phase::Blocked { host } => {
                    let (arrive, energy, ev) = start_upload(self.cluster, s, host, now, self.tracing);
                    self.tx_energy_j += energy;
                    self.trace.extend(ev);
                    self.events.push(Reverse((arrive, j)));
                }
                Phase::LocalWait => {
                    let done = now + s.device_time;
                    s.phase = Phase::LocalRun { done };
                    self.events.push(Reverse((done, j)));
                }
                _ => {}
            }
        }
    }

    fn try_start(&mut self, tasks: &mut [LiveTask], h: usize, now: Nanos) {
        let host = &self.cluster.hosts[h];
        while self.running[h] < host.cores {
            let Some(&Reverse((ready, _, i))) = self.queues[h].peek() else {
                break;
            };
            if ready > now {
                break;
            }
            self.queues[h].pop();
            self.running[h] += 1;
            tasks[i].phase = Phase::Running { host: host.id, since: now };
            self.events.push(Reverse((now + host.compute_time(tasks[i].remaining_mi), i)));
            self.emit(now, TraceKind::Start, tasks[i].id, Some(host.id));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infra::{default_cluster, FleetConfig, NetworkSpec};
    use crate::workflow::{build_frame_dag, WorkloadProfile};

    fn single_task_instance(length_mi: f64) -> WorkflowInstance {
        let profile = WorkloadProfile::default();
        let mut inst = build_frame_dag(UserId(0), 1, &profile);
        let f = &mut inst.tasks[0];
        assert_eq!(f.kind, ComponentKind::FeatureExtractor);
        f.length_mi = length_mi;
        f.input_bits = 1.5e6;
        f.output_bits = 0.3e6;
        inst
    }

    fn state(n_edge: u32, n_cloud: u32, users: u32) -> SimState {
        let fleet = FleetConfig { edge_hosts: n_edge, cloud_hosts: n_cloud, ..Default::default() };
        let cluster = ClusterState::new(fleet.hosts().unwrap(), NetworkSpec::default(), users).unwrap();
        SimState::new(cluster, WorkloadProfile::default().frame_period(), SimConfig::default())
    }

    /// Idles until the instance's release time, then releases it.
    fn release_at(s: &mut SimState, inst: &WorkflowInstance) {
        while s.clock() < inst.release {
            s.advance();
        }
        s.release(inst);
    }

    fn run_until_done(s: &mut SimState, mut assignment: Assignment) -> Vec<CompletionRecord> {
        let mut done = Vec::new();
        for _ in 0..20 {
            let r = s.simulate_interval(&assignment).unwrap();
            assignment = Assignment::new();
            done.extend(r.completions);
        }
        done
    }

    #[test]
    fn single_task_component_arithmetic() {
        let mut s = state(1, 0, 1);
        let inst = single_task_instance(200.0);
        release_at(&mut s, &inst);
        let f = inst.tasks[0].id;
        let done = run_until_done(&mut s, [Decision::new(f, HostId(0))].into_iter().collect());
        let rec = done.iter().find(|c| c.task == f).unwrap();
        // 200 MI / 4029 MIPS = 49.640 ms.
        assert_eq!(rec.computation, Nanos::from_secs_f64(200.0 / 4029.0));
        assert!((rec.computation.as_millis_f64() - 49.640).abs() < 1e-3);
        // 1.5 Mbit up at 100 Mbit/s plus 0.3 Mbit back down.
        assert_eq!(rec.transmission, Nanos::from_millis(15) + Nanos::from_millis(3));
        assert_eq!(rec.connection, Nanos::from_micros(500));
        assert_eq!(rec.queuing, Nanos::ZERO);
        assert_eq!(rec.response(), rec.transmission + rec.connection + rec.queuing + rec.computation);
    }

    #[test]
    fn empty_interval_reports_only_idle_energy() {
        let mut s = state(2, 1, 0);
        let r = s.simulate_interval(&Assignment::new()).unwrap();
        assert!(r.completions.is_empty());
        assert_eq!((r.migrations, r.deadline_misses, r.window_tasks), (0, 0, 0));
        assert_eq!(r.transmission_energy_j, 0.0);
        let idle = (10.0 * 2.0 + 40.0) * s.interval_len().as_secs_f64();
        assert!((r.computation_energy_j - idle).abs() < 1e-12);
        assert!(r.utilization.iter().all(|u| *u == 0.0));
    }

    #[test]
    fn cross_tier_reschedule_counts_one_migration() {
        let mut s = state(1, 1, 1);
        let inst = single_task_instance(200.0);
        release_at(&mut s, &inst);
        let f = inst.tasks[0].id;
        let mut first = Assignment::new();
        first.insert(f, HostId(0));
        s.simulate_interval(&first).unwrap();
        // 15.5 ms of upload leaves ~1 ms of computation in the first interval.
        s.simulate_interval(&Assignment::new()).unwrap();
        assert!(matches!(s.task(f).unwrap().phase(), Phase::Running { .. }));
        assert!(s.schedulable().contains(&f));

        let mut moved = Assignment::new();
        moved.insert(f, HostId(1));
        let r = s.simulate_interval(&moved).unwrap();
        assert_eq!(r.migrations, 1);
        assert!(r.migration_time > Nanos::ZERO);
        let done = run_until_done(&mut s, Assignment::new());
        let rec = done.iter().find(|c| c.task == f).unwrap();
        assert_eq!(rec.migrations, 1);
        assert_eq!(rec.first_host, Some(HostId(0)));
        assert_eq!(rec.host, Some(HostId(1)));
        assert_eq!(rec.response(), rec.transmission + rec.connection + rec.queuing + rec.computation);
    }

    #[test]
    fn same_tier_move_is_free() {
        let mut s = state(2, 0, 1);
        let inst = single_task_instance(200.0);
        release_at(&mut s, &inst);
        let f = inst.tasks[0].id;
        s.simulate_interval(&[Decision::new(f, HostId(0))].into_iter().collect()).unwrap();
        s.simulate_interval(&Assignment::new()).unwrap();
        let r = s.simulate_interval(&[Decision::new(f, HostId(1))].into_iter().collect()).unwrap();
        assert_eq!((r.migrations, r.migration_time), (0, Nanos::ZERO));
        assert_eq!(s.task(f).unwrap().host(), Some(HostId(1)));
    }

    #[test]
    fn invalid_assignment_rejected_without_mutation() {
        let mut s = state(1, 0, 1);
        let inst = single_task_instance(10.0);
        release_at(&mut s, &inst);
        let before = s.clone();
        let bad_host: Assignment = [Decision::new(inst.tasks[0].id, HostId(9))].into_iter().collect();
        let err = s.simulate_interval(&bad_host).unwrap_err();
        assert!(err.to_string().starts_with("invalid assignment"));
        let bad_task: Assignment = [Decision::new(TaskId(1), HostId(0))].into_iter().collect();
        assert!(s.simulate_interval(&bad_task).is_err());
        // The renderer is local and never schedulable.
        let local: Assignment = [Decision::new(inst.tasks[1].id, HostId(0))].into_iter().collect();
        assert!(s.simulate_interval(&local).is_err());
        assert_eq!(s, before);
    }

    #[test]
    fn fork_is_isolated() {
        let mut s = state(1, 1, 1);
        let inst = build_frame_dag(UserId(0), 0, &WorkloadProfile::default());
        release_at(&mut s, &inst);
        let snapshot = s.clone();
        let mut f = s.fork();
        for _ in 0..7 {
            f.simulate_interval(&Assignment::new()).unwrap();
        }
        assert_eq!(s, snapshot);
        assert_eq!(s.clock(), Nanos::ZERO);
        assert_eq!(f.clock(), s.interval_len() * 7);
        let empty = state(1, 0, 0);
        assert_eq!(empty.fork(), empty);
    }

    #[test]
    fn blocked_successor_waits_for_predecessor_delivery() {
        let mut s = state(2, 0, 1);
        s.set_trace(true);
        let inst = build_frame_dag(UserId(0), 2, &WorkloadProfile::default());
        release_at(&mut s, &inst);
        let assignment: Assignment = s.schedulable().into_iter().map(|t| Decision::new(t, HostId(0))).collect();
        let mut trace = Vec::new();
        let mut r = s.simulate_interval(&assignment).unwrap();
        trace.append(&mut r.trace);
        for _ in 0..10 {
            trace.append(&mut s.advance().trace);
        }
        let at = |kind, task| trace.iter().find(|e| e.kind == kind && e.task == task).map(|e| e.time);
        let f = inst.task(ComponentKind::FeatureExtractor).unwrap().id;
        let t = inst.task(ComponentKind::Tracker).unwrap().id;
        let r_id = inst.task(ComponentKind::Renderer).unwrap().id;
        assert!(at(TraceKind::Upload, t).unwrap() >= at(TraceKind::Deliver, f).unwrap());
        assert!(at(TraceKind::Deliver, r_id).unwrap() > at(TraceKind::Deliver, t).unwrap());
        assert!(s.is_empty());
    }

    #[test]
    fn fifo_queue_ties_break_by_task_id() {
        let mut s = state(1, 0, 3);
        let mut ids = Vec::new();
        for u in 0..3 {
            let mut inst = build_frame_dag(UserId(u), 1, &WorkloadProfile::default());
            inst.tasks[0].length_mi = 400.0;
            ids.push(inst.tasks[0].id);
            release_at(&mut s, &inst);
        }
        let a: Assignment = ids.iter().map(|t| Decision::new(*t, HostId(0))).collect();
        s.simulate_interval(&a).unwrap();
        s.advance();
        // Two cores: the two lowest ids start first.
        assert!(matches!(s.task(ids[0]).unwrap().phase(), Phase::Running { .. }));
        assert!(matches!(s.task(ids[1]).unwrap().phase(), Phase::Running { .. }));
        assert!(matches!(s.task(ids[2]).unwrap().phase(), Phase::Queued { .. }));
        assert_eq!(s.occupancy(HostId(0)), (2, 1));
    }

    #[test]
    fn unfinished_past_deadline_counts_once() {
        let mut s = state(1, 0, 1);
        let inst = single_task_instance(2000.0);
        release_at(&mut s, &inst);
        let a: Assignment = [Decision::new(inst.tasks[0].id, HostId(0))].into_iter().collect();
        let mut misses = s.simulate_interval(&a).unwrap().deadline_misses;
        for _ in 0..40 {
            misses += s.advance().deadline_misses;
        }
        assert_eq!(misses, 1);
    }

    #[test]
    fn trace_lines_are_tab_separated() {
        let ev = TraceEvent { time: Nanos(5), kind: TraceKind::Start, task: TaskId(7), host: Some(HostId(2)) };
        assert_eq!(ev.to_string(), "5\tstart\t7\t2");
        let ev = TraceEvent { host: None, ..ev };
        assert_eq!(ev.to_string(), "5\tstart\t7\t-");
    }

    #[test]
    fn default_cluster_state_runs() {
        let mut s = SimState::new(default_cluster(1, 1).unwrap(), Nanos::from_millis(10), SimConfig::default());
        assert!(s.simulate_interval(&Assignment::new()).is_ok());
    }

    #[test]
    fn probe_matches_fork() {
        let profile = WorkloadProfile::default();
        let mut s = SimState::new(default_cluster(2, 1).unwrap(), profile.frame_period(), SimConfig::default());
        s.set_trace(true);
        for frame in 0..3 {
            for u in 0..2 {
                s.release(&build_frame_dag(UserId(u), frame, &profile));
            }
            let mut a = Assignment::new();
            for (i, t) in s.schedulable().into_iter().enumerate() {
                a.insert(t, HostId(i as u32 % 3));
            }
            let (mut full, mut lean) = (s.fork(), s.probe());
            let (rf, rl) = (full.simulate_interval(&a).unwrap(), lean.simulate_interval(&a).unwrap());
            assert_eq!(rf.indicators(), rl.indicators());
            assert_eq!(rf.window_tasks, rl.window_tasks);
            assert!(!rf.trace.is_empty() && rl.trace.is_empty());
            s.simulate_interval(&a).unwrap();
        }
    }
}
