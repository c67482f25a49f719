use crate::rng::SeedStream;
use crate::sim::Assignment;

use super::ScheduleContext;

/// Each pending task to a uniformly drawn host.
pub fn random_schedule(ctx: &ScheduleContext<'_>, rng: &mut SeedStream) -> Assignment {
    let hosts = ctx.hosts();
    let mut out = Assignment::new();
    for &task in ctx.pending {
        out.insert(task, hosts[rng.index(hosts.len())]);
    }
    out
}
