//! Look-ahead tree search over `(task, host)` decisions.
//!
//! One tree is grown per committed decision. The root stands for the
//! decisions already committed this interval; each deeper node adds one more
//! decision for the same interval. An iteration selects a node by UCB,
//! expands it with up to `expansion_width` uniformly sampled decisions, scores
//! each new child with a one-interval simulation (`q`), rolls each child out
//! `N` further intervals with random single decisions, and backpropagates the
//! discounted rollout value of the best new child along its path. With
//! discarding enabled the search stops as soon as one depth-1 child has more
//! than `⌊M/2⌋` real visits, since no sibling can overtake it by visit count.

use serde::{Deserialize, Serialize};

use crate::infra::HostId;
use crate::rng::SeedStream;
use crate::sim::{Assignment, Decision, SimState};
use crate::workflow::TaskId;

use super::tree::{discounted_value, NodeId, SearchTree, ROOT};
use super::{ScheduleContext, ScheduleError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmctParams {
    /// UCB exploration parameter.
    pub c: f64,
    /// Roll-out steps `N`.
    pub rollout: u32,
    /// Iteration budget `M` per tree.
    pub iterations: u32,
    pub expansion_width: u32,
    /// Per-step discount applied when folding rollout rewards.
    pub lambda: f64,
    /// Commit one uniformly random decision before the first tree.
    pub commit_random_root: bool,
}

impl Default for MmctParams {
    fn default() -> Self {
        Self {
            c: 0.5,
            rollout: 7,
            iterations: 10,
            expansion_width: 4,
            lambda: 0.9,
            commit_random_root: false,
        }
    }
}

impl MmctParams {
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.c) {
            out.push(("c".into(), "out of [0,1]".into()));
        }
        if self.rollout < 1 {
            out.push(("rollout".into(), "must be >= 1".into()));
        }
        if self.iterations < 1 {
            out.push(("iterations".into(), "must be >= 1".into()));
        }
        if self.expansion_width < 1 {
            out.push(("expansion_width".into(), "must be >= 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            out.push(("lambda".into(), "out of (0,1]".into()));
        }
        out
    }
}

/// The world a tree search plays against.
pub trait SearchEnv {
    type State;

    /// Tasks still to be decided in this tree.
    fn tasks(&self) -> &[TaskId];
    fn hosts(&self) -> &[HostId];
    /// Applies `decisions` at the snapshot and runs one interval; returns the
    /// post-interval state and its reward.
    fn first_step(&self, decisions: &[Decision]) -> (Self::State, f64);
    /// Applies `decisions` to a look-ahead state and runs one more interval.
    fn next_step(&self, state: &mut Self::State, decisions: &[Decision]) -> f64;
    /// Whether `task` may still receive a decision in `state`.
    fn is_open(&self, state: &Self::State, task: TaskId) -> bool;
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub decision: Decision,
    pub iterations: u32,
    pub discarded: bool,
    pub tree: SearchTree,
}

/// Grows `node` by up to `width` distinct decisions over tasks not yet
/// decided on its path. Returns the new children with their post-interval
/// states; an empty result marks the node terminal.
pub fn expand_leaf<E: SearchEnv>(
    tree: &mut SearchTree,
    node: NodeId,
    env: &E,
    width: u32,
    rng: &mut SeedStream,
) -> Vec<(NodeId, E::State)> {
    let path = tree.path_decisions(node);
    let open: Vec<TaskId> = env
        .tasks()
        .iter()
        .copied()
        .filter(|t| path.iter().all(|d| d.task != *t))
        .collect();
    let hosts = env.hosts();
    tree.node_mut(node).expanded = true;
    let space = open.len() * hosts.len();
    let mut children = Vec::new();
    let mut decisions = path;
    for pick in rng.sample_distinct(space, width as usize) {
        let d = Decision::new(open[pick / hosts.len()], hosts[pick % hosts.len()]);
        decisions.push(d);
        let (state, q) = env.first_step(&decisions);
        decisions.pop();
        children.push((tree.add_child(node, d, q), state));
    }
    children
}

/// `[q_0, q_1, .., q_N]`: the node's own reward followed by `steps` intervals,
/// each placing one random still-open task on a random host.
pub fn rollout<E: SearchEnv>(
    env: &E,
    mut state: E::State,
    q0: f64,
    mut remaining: Vec<TaskId>,
    steps: u32,
    rng: &mut SeedStream,
) -> Vec<f64> {
    let hosts = env.hosts();
    let mut rewards = Vec::with_capacity(steps as usize + 1);
    rewards.push(q0);
    for _ in 0..steps {
        remaining.retain(|t| env.is_open(&state, *t));
        let q = if remaining.is_empty() {
            env.next_step(&mut state, &[])
        } else {
            let task = remaining.swap_remove(rng.index(remaining.len()));
            let host = hosts[rng.index(hosts.len())];
            env.next_step(&mut state, &[Decision::new(task, host)])
        };
        rewards.push(q);
    }
    rewards
}

fn undecided(env: &impl SearchEnv, path: &[Decision]) -> Vec<TaskId> {
    env.tasks()
        .iter()
        .copied()
        .filter(|t| path.iter().all(|d| d.task != *t))
        .collect()
}

/// Builds one tree and returns the decision to commit.
pub fn search<E: SearchEnv>(env: &E, params: &MmctParams, discard: bool, rng: &SeedStream) -> Option<SearchOutcome> {
    if env.tasks().is_empty() || env.hosts().is_empty() {
        return None;
    }
    let mut tree = SearchTree::new();
    let mut iterations = 0;
    let mut discarded = false;
    while iterations < params.iterations {
        let mut it_rng = rng.substream(iterations as u64);
        let leaf = tree.select_leaf(params.c);
        let mut best: Option<(f64, NodeId, Vec<f64>)> = None;
        if !tree.node(leaf).expanded {
            let children = expand_leaf(&mut tree, leaf, env, params.expansion_width, &mut it_rng);
            for (k, (child, state)) in children.into_iter().enumerate() {
                let path = tree.path_decisions(child);
                let mut child_rng = it_rng.substream(k as u64 + 1);
                let rewards = rollout(
                    env,
                    state,
                    tree.node(child).q,
                    undecided(env, &path),
                    params.rollout,
                    &mut child_rng,
                );
                let value = discounted_value(&rewards, params.lambda);
                if best.as_ref().is_none_or(|(v, _, _)| value > *v) {
                    best = Some((value, child, rewards));
                }
            }
        }
        let (target, rewards) = match best {
            Some((_, child, rewards)) => (child, rewards),
            None => {
                // Terminal: every task on the path is decided.
                let path = tree.path_decisions(leaf);
                let (state, q) = env.first_step(&path);
                let q0 = if leaf == ROOT { q } else { tree.node(leaf).q };
                let mut leaf_rng = it_rng.substream(0);
                (leaf, rollout(env, state, q0, undecided(env, &path), params.rollout, &mut leaf_rng))
            }
        };
        tree.backpropagate(target, &rewards, params.lambda);
        iterations += 1;
        if discard && tree.discard_check(params.iterations).is_some() {
            discarded = true;
            break;
        }
    }
    let chosen = if discarded {
        tree.discard_check(params.iterations)
    } else {
        tree.most_visited_child()
    }?;
    Some(SearchOutcome {
        decision: tree.node(chosen).decision.expect("depth-1 node has a decision"),
        iterations,
        discarded,
        tree,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MmctOutcome {
    pub assignment: Assignment,
    pub trees: u32,
    pub iterations: u64,
    pub discards: u32,
}

struct SimEnv<'a> {
    ctx: &'a ScheduleContext<'a>,
    committed: &'a [Decision],
    tasks: &'a [TaskId],
    hosts: &'a [HostId],
}

impl SearchEnv for SimEnv<'_> {
    type State = SimState;

    fn tasks(&self) -> &[TaskId] {
        self.tasks
    }

    fn hosts(&self) -> &[HostId] {
        self.hosts
    }

    fn first_step(&self, decisions: &[Decision]) -> (SimState, f64) {
        let mut state = self.ctx.state.probe();
        let mut all = Vec::with_capacity(self.committed.len() + decisions.len());
        all.extend_from_slice(self.committed);
        all.extend_from_slice(decisions);
        state.apply(&all).expect("pending tasks were validated as schedulable");
        let r = state.advance();
        let q = self.ctx.objective.q(&r.indicators(), r.window_tasks);
        (state, q)
    }

    fn next_step(&self, state: &mut SimState, decisions: &[Decision]) -> f64 {
        state.apply(decisions).expect("rollout decisions target open tasks");
        let r = state.advance();
        self.ctx.objective.q(&r.indicators(), r.window_tasks)
    }

    fn is_open(&self, state: &SimState, task: TaskId) -> bool {
        state.can_schedule(task)
    }
}

fn run(
    ctx: &ScheduleContext<'_>,
    params: &MmctParams,
    discard: bool,
    rng: &mut SeedStream,
) -> Result<MmctOutcome, ScheduleError> {
    ctx.check()?;
    let hosts = ctx.hosts();
    let base = rng.substream(0x4D4D_4354);
    let mut committed: Vec<Decision> = Vec::with_capacity(ctx.pending.len());
    let mut remaining: Vec<TaskId> = ctx.pending.to_vec();
    let mut out = MmctOutcome {
        assignment: Assignment::new(),
        trees: 0,
        iterations: 0,
        discards: 0,
    };
    if params.commit_random_root && !remaining.is_empty() {
        let mut root_rng = base.substream(u64::MAX);
        let task = remaining.remove(root_rng.index(remaining.len()));
        committed.push(Decision::new(task, hosts[root_rng.index(hosts.len())]));
    }
    while !remaining.is_empty() {
        let env = SimEnv {
            ctx,
            committed: &committed,
            tasks: &remaining,
            hosts: &hosts,
        };
        let result = search(&env, params, discard, &base.substream(out.trees as u64))
            .expect("non-empty task and host sets");
        out.trees += 1;
        out.iterations += result.iterations as u64;
        out.discards += result.discarded as u32;
        committed.push(result.decision);
        remaining.retain(|t| *t != result.decision.task);
    }
    out.assignment = committed.into_iter().collect();
    Ok(out)
}

/// Look-ahead search with the discard rule.
pub fn mmct_schedule(
    ctx: &ScheduleContext<'_>,
    params: &MmctParams,
    rng: &mut SeedStream,
) -> Result<MmctOutcome, ScheduleError> {
    run(ctx, params, true, rng)
}

/// The same search always running the full iteration budget.
pub fn mcts_plain_schedule(
    ctx: &ScheduleContext<'_>,
    params: &MmctParams,
    rng: &mut SeedStream,
) -> Result<MmctOutcome, ScheduleError> {
    run(ctx, params, false, rng)
}
