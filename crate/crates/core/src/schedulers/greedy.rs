use crate::sim::{Assignment, Decision};
use crate::workflow::TaskId;

use super::{ScheduleContext, ScheduleError};

/// Pending tasks by absolute deadline, then id.
pub fn deadline_order(ctx: &ScheduleContext<'_>) -> Vec<TaskId> {
    let mut order: Vec<(crate::time::Nanos, TaskId)> = ctx
        .pending
        .iter()
        .map(|&t| (ctx.state.task(t).map_or(crate::time::Nanos::MAX, |lt| lt.due()), t))
        .collect();
    order.sort();
    order.into_iter().map(|(_, t)| t).collect()
}

/// One task at a time, in deadline order: the host whose one-interval probe
/// of the partial assignment has the lowest `Y`. Ties go to the lower host id.
pub fn greedy_schedule(ctx: &ScheduleContext<'_>) -> Result<Assignment, ScheduleError> {
    let hosts = ctx.hosts();
    let mut chosen: Vec<Decision> = Vec::with_capacity(ctx.pending.len());
    for task in deadline_order(ctx) {
        let mut best: Option<(f64, Decision)> = None;
        for &host in &hosts {
            let d = Decision::new(task, host);
            chosen.push(d);
            let y = ctx.probe_y(&chosen)?;
            chosen.pop();
            if best.is_none_or(|(by, _)| y < by) {
                best = Some((y, d));
            }
        }
        chosen.push(best.expect("at least one host").1);
    }
    Ok(chosen.into_iter().collect())
}
