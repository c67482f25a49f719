//! Per-frame MAR task graphs.
//!
//! A frame always runs the feature extractor and the local renderer; the
//! tracker, mapper and object recognizer join on frames divisible by 2, 3 and
//! 4 respectively, which yields four distinct graph shapes over a 12-frame
//! cycle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeedStream;
use crate::time::Nanos;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorkflowError {
    #[error("not schedulable: {0:?} has no scheduling deadline")]
    NotSchedulable(ComponentKind),
    #[error("empty workload")]
    EmptyWorkload,
    #[error("cyclic task graph in instance {0}")]
    Cyclic(u64),
    #[error("unresolved predecessor {missing} of task {task}")]
    Unresolved { task: TaskId, missing: TaskId },
    #[error("bad sink in instance {0}: the only sink must be a single renderer")]
    BadSink(u64),
    #[error("local-only task {0} is not at a source or sink position")]
    MisplacedLocal(TaskId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    VideoCapturer,
    FeatureExtractor,
    Mapper,
    ObjectRecognizer,
    Tracker,
    Renderer,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 6] = [
        ComponentKind::VideoCapturer,
        ComponentKind::FeatureExtractor,
        ComponentKind::Mapper,
        ComponentKind::ObjectRecognizer,
        ComponentKind::Tracker,
        ComponentKind::Renderer,
    ];

    /// Components that interact with the user directly and never leave the device.
    pub fn local_only(self) -> bool {
        matches!(self, ComponentKind::VideoCapturer | ComponentKind::Renderer)
    }

    pub fn is_offloadable(self) -> bool {
        !self.local_only()
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ComponentKind::VideoCapturer => "V",
            ComponentKind::FeatureExtractor => "F",
            ComponentKind::Mapper => "M",
            ComponentKind::ObjectRecognizer => "O",
            ComponentKind::Tracker => "T",
            ComponentKind::Renderer => "R",
        }
    }

    fn slot(self) -> u64 {
        match self {
            ComponentKind::VideoCapturer => 0,
            ComponentKind::FeatureExtractor => 1,
            ComponentKind::Mapper => 2,
            ComponentKind::ObjectRecognizer => 3,
            ComponentKind::Tracker => 4,
            ComponentKind::Renderer => 5,
        }
    }

    /// Deadline as a multiple of the frame period.
    fn deadline_frames(self) -> Option<u64> {
        match self {
            ComponentKind::VideoCapturer => None,
            ComponentKind::FeatureExtractor | ComponentKind::Renderer => Some(1),
            ComponentKind::Tracker => Some(2),
            ComponentKind::Mapper => Some(3),
            ComponentKind::ObjectRecognizer => Some(4),
        }
    }
}

/// Task identifier packing `(frame, user, kind)`; ordering follows release order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u64);

impl TaskId {
    pub fn new(frame: u32, user: UserId, kind: ComponentKind) -> Self {
        TaskId(((frame as u64) << 32) | ((user.0 as u64 & 0x00FF_FFFF) << 8) | kind.slot())
    }

    pub fn frame(self) -> u32 {
        (self.0 >> 32) as u32
    }

    pub fn user(self) -> UserId {
        UserId(((self.0 >> 8) & 0x00FF_FFFF) as u32)
    }
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = ComponentKind::ALL
            .iter()
            .find(|k| k.slot() == self.0 & 0xFF)
            .map_or("?", |k| k.short_name());
        write!(f, "u{}f{}{}", self.user().0, self.frame(), kind)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub user: UserId,
    pub frame: u32,
    pub kind: ComponentKind,
    /// Compute demand in million instructions.
    pub length_mi: f64,
    pub input_bits: f64,
    pub output_bits: f64,
    /// Relative to the instance release time.
    pub deadline: Nanos,
    /// Fixed on-device run time; non-zero only for local components.
    pub device_time: Nanos,
    pub predecessors: Vec<TaskId>,
    /// Derived from `predecessors` when the instance is built.
    pub successors: Vec<TaskId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkflowInstance {
    pub id: u64,
    pub user: UserId,
    pub frame: u32,
    pub release: Nanos,
    pub tasks: Vec<TaskSpec>,
}

impl WorkflowInstance {
    pub fn kinds(&self) -> Vec<ComponentKind> {
        let mut kinds: Vec<_> = self.tasks.iter().map(|t| t.kind).collect();
        kinds.sort();
        kinds
    }

    pub fn task(&self, kind: ComponentKind) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.kind == kind)
    }

    pub fn offloadable_count(&self) -> usize {
        self.tasks.iter().filter(|t| t.kind.is_offloadable()).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComponentProfile {
    pub length_mi: f64,
    pub input_bits: f64,
    pub output_bits: f64,
}

impl ComponentProfile {
    const fn new(length_mi: f64, input_bits: f64, output_bits: f64) -> Self {
        Self {
            length_mi,
            input_bits,
            output_bits,
        }
    }
}

impl Default for ComponentProfile {
    fn default() -> Self {
        Self::new(10.0, FEATURE_BITS, RESULT_BITS)
    }
}

const FRAME_BITS: f64 = 0.375e6;
const FEATURE_BITS: f64 = 0.075e6;
const RESULT_BITS: f64 = 0.025e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadProfile {
    pub frame_rate: f64,
    pub users: u32,
    pub frames: u32,
    /// Half-width of the uniform relative jitter applied to task lengths.
    pub length_jitter: f64,
    /// Caps the workload at whole instances totalling at most this many tasks.
    pub task_budget: Option<u64>,
    pub renderer_ms: f64,
    pub feature_extractor: ComponentProfile,
    pub tracker: ComponentProfile,
    pub mapper: ComponentProfile,
    pub object_recognizer: ComponentProfile,
}

impl Default for WorkloadProfile {
    fn default() -> Self {
        Self {
            frame_rate: 60.0,
            users: 10,
            frames: 200,
            length_jitter: 0.2,
            task_budget: None,
            renderer_ms: 1.0,
            feature_extractor: ComponentProfile::new(10.0, FRAME_BITS, FEATURE_BITS),
            tracker: ComponentProfile::new(20.0, FEATURE_BITS, RESULT_BITS),
            mapper: ComponentProfile::new(75.0, FEATURE_BITS, RESULT_BITS),
            object_recognizer: ComponentProfile::new(125.0, FEATURE_BITS, RESULT_BITS),
        }
    }
}

impl WorkloadProfile {
    /// One frame period, which is also the scheduling interval.
    pub fn frame_period(&self) -> Nanos {
        Nanos::from_secs_f64(1.0 / self.frame_rate)
    }

    pub fn component(&self, kind: ComponentKind) -> Option<&ComponentProfile> {
        match kind {
            ComponentKind::FeatureExtractor => Some(&self.feature_extractor),
            ComponentKind::Tracker => Some(&self.tracker),
            ComponentKind::Mapper => Some(&self.mapper),
            ComponentKind::ObjectRecognizer => Some(&self.object_recognizer),
            ComponentKind::VideoCapturer | ComponentKind::Renderer => None,
        }
    }

    /// Range violations as `(key, message)` pairs, keys relative to the profile.
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            out.push(("frame_rate".into(), "must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.length_jitter) {
            out.push(("length_jitter".into(), "out of [0,1)".into()));
        }
        if !(self.renderer_ms >= 0.0) {
            out.push(("renderer_ms".into(), "must be >= 0".into()));
        }
        for (name, c) in [
            ("feature_extractor", &self.feature_extractor),
            ("tracker", &self.tracker),
            ("mapper", &self.mapper),
            ("object_recognizer", &self.object_recognizer),
        ] {
            if !(c.length_mi > 0.0) {
                out.push((format!("{name}.length_mi"), "must be > 0".into()));
            }
            if !(c.input_bits > 0.0) {
                out.push((format!("{name}.input_bits"), "must be > 0".into()));
            }
            if !(c.output_bits > 0.0) {
                out.push((format!("{name}.output_bits"), "must be > 0".into()));
            }
        }
        out
    }
}

pub fn deadline_of(kind: ComponentKind, profile: &WorkloadProfile) -> Result<Nanos, WorkflowError> {
    kind.deadline_frames()
        .map(|k| profile.frame_period() * k)
        .ok_or(WorkflowError::NotSchedulable(kind))
}

/// Builds the nominal (unjittered) graph for one user's frame.
pub fn build_frame_dag(user: UserId, frame: u32, profile: &WorkloadProfile) -> WorkflowInstance {
    let with_tracker = frame % 2 == 0;
    let with_mapper = frame % 3 == 0;
    let with_recognizer = frame % 4 == 0;
    let id = |kind| TaskId::new(frame, user, kind);

    let mut plan: Vec<(ComponentKind, Vec<TaskId>)> = vec![(ComponentKind::FeatureExtractor, vec![])];
    let fe = id(ComponentKind::FeatureExtractor);
    if with_mapper {
        plan.push((ComponentKind::Mapper, vec![fe]));
    }
    if with_recognizer {
        let mut preds = vec![fe];
        if with_mapper {
            preds.push(id(ComponentKind::Mapper));
        }
        plan.push((ComponentKind::ObjectRecognizer, preds));
    }
    if with_tracker {
        let mut preds = vec![fe];
        if with_recognizer {
            preds.push(id(ComponentKind::ObjectRecognizer));
        }
        plan.push((ComponentKind::Tracker, preds));
    }
    let render_preds: Vec<TaskId> = plan.iter().map(|(k, _)| id(*k)).collect();
    plan.push((ComponentKind::Renderer, render_preds));

    let mut tasks: Vec<TaskSpec> = plan
        .into_iter()
        .map(|(kind, predecessors)| {
            let (length_mi, input_bits, output_bits, device_time) = match profile.component(kind) {
                Some(c) => (c.length_mi, c.input_bits, c.output_bits, Nanos::ZERO),
                None => (
                    profile.renderer_ms,
                    0.0,
                    0.0,
                    Nanos::from_millis_f64(profile.renderer_ms),
                ),
            };
            TaskSpec {
                id: id(kind),
                user,
                frame,
                kind,
                length_mi,
                input_bits,
                output_bits,
                deadline: deadline_of(kind, profile).expect("graph holds schedulable kinds only"),
                device_time,
                predecessors,
                successors: Vec::new(),
            }
        })
        .collect();
    link_successors(&mut tasks);

    WorkflowInstance {
        id: ((frame as u64) << 32) | user.0 as u64,
        user,
        frame,
        release: profile.frame_period() * frame as u64,
        tasks,
    }
}

fn link_successors(tasks: &mut [TaskSpec]) {
    let edges: Vec<(TaskId, TaskId)> = tasks
        .iter()
        .flat_map(|t| t.predecessors.iter().map(move |p| (*p, t.id)))
        .collect();
    for t in tasks.iter_mut() {
        t.successors = edges.iter().filter(|(p, _)| *p == t.id).map(|(_, s)| *s).collect();
    }
}

/// Frames `0..frames`, one instance per user per frame, with seeded length jitter.
pub fn generate_workload(profile: &WorkloadProfile, seed: u64) -> Result<Vec<WorkflowInstance>, WorkflowError> {
    if profile.users == 0 || profile.frames == 0 {
        return Err(WorkflowError::EmptyWorkload);
    }
    let mut rng = SeedStream::new(seed);
    let jitter = profile.length_jitter;
    let mut out = Vec::with_capacity(profile.users as usize * profile.frames as usize);
    let mut budget_left = profile.task_budget;
    'frames: for frame in 0..profile.frames {
        for user in 0..profile.users {
            let mut inst = build_frame_dag(UserId(user), frame, profile);
            for task in inst.tasks.iter_mut().filter(|t| t.kind.is_offloadable()) {
                task.length_mi *= rng.uniform(1.0 - jitter, 1.0 + jitter);
            }
            if let Some(left) = budget_left.as_mut() {
                let n = inst.tasks.len() as u64;
                if n > *left {
                    break 'frames;
                }
                *left -= n;
            }
            out.push(inst);
        }
    }
    if out.is_empty() {
        return Err(WorkflowError::EmptyWorkload);
    }
    Ok(out)
}

pub fn validate_dag(instance: &WorkflowInstance) -> Result<(), WorkflowError> {
    let tasks = &instance.tasks;
    let index_of = |id: TaskId| tasks.iter().position(|t| t.id == id);

    for t in tasks {
        for p in &t.predecessors {
            if index_of(*p).is_none() {
                return Err(WorkflowError::Unresolved { task: t.id, missing: *p });
            }
        }
    }

    // Kahn's algorithm.
    let mut indegree: Vec<usize> = tasks.iter().map(|t| t.predecessors.len()).collect();
    let mut ready: Vec<usize> = (0..tasks.len()).filter(|&i| indegree[i] == 0).collect();
    let mut visited = 0;
    while let Some(i) = ready.pop() {
        visited += 1;
        for (j, t) in tasks.iter().enumerate() {
            let hits = t.predecessors.iter().filter(|p| **p == tasks[i].id).count();
            if hits > 0 {
                indegree[j] -= hits;
                if indegree[j] == 0 {
                    ready.push(j);
                }
            }
        }
    }
    if visited != tasks.len() {
        return Err(WorkflowError::Cyclic(instance.id));
    }

    let has_successor = |id: TaskId| tasks.iter().any(|t| t.predecessors.contains(&id));
    let sinks: Vec<&TaskSpec> = tasks.iter().filter(|t| !has_successor(t.id)).collect();
    if sinks.len() != 1 || sinks[0].kind != ComponentKind::Renderer {
        return Err(WorkflowError::BadSink(instance.id));
    }
    for t in tasks.iter().filter(|t| t.kind.local_only()) {
        let is_source = t.predecessors.is_empty();
        let is_sink = !has_successor(t.id);
        if !(is_source || is_sink) {
            return Err(WorkflowError::MisplacedLocal(t.id));
        }
    }
    Ok(())
}
