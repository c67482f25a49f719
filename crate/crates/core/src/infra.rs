//! Hosts, links, energy and user mobility for the edge-cloud fleet.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeedStream;
use crate::time::Nanos;
use crate::workflow::UserId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InfraError {
    #[error("empty cluster")]
    EmptyCluster,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Edge,
    Cloud,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HostId(pub u32);

impl HostId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HostSpec {
    pub id: HostId,
    pub tier: Tier,
    pub cores: u32,
    pub mips_per_core: f64,
    pub connection_time: Nanos,
    pub busy_power_w: f64,
    pub idle_power_w: f64,
}

impl HostSpec {
    pub fn capacity_mips(&self) -> f64 {
        self.cores as f64 * self.mips_per_core
    }

    /// Time for one core to execute `mi` million instructions.
    pub fn compute_time(&self, mi: f64) -> Nanos {
        Nanos::from_secs_f64(mi / self.mips_per_core)
    }
}

/// Per-tier machine type as written in the experiment config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HostClass {
    pub cores: u32,
    pub mips_per_core: f64,
    pub connection_ms: f64,
    pub busy_power_w: f64,
    pub idle_power_w: f64,
}

impl HostClass {
    /// Two-core, 4029-MIPS edge machine with 0.5 ms connection time.
    pub fn edge() -> Self {
        Self {
            cores: 2,
            mips_per_core: 4029.0,
            connection_ms: 0.5,
            busy_power_w: 30.0,
            idle_power_w: 10.0,
        }
    }

    /// Eight-core, 1601-MIPS cloud machine with 5 ms connection time.
    pub fn cloud() -> Self {
        Self {
            cores: 8,
            mips_per_core: 1601.0,
            connection_ms: 5.0,
            busy_power_w: 120.0,
            idle_power_w: 40.0,
        }
    }

    fn spec(&self, id: HostId, tier: Tier) -> HostSpec {
        HostSpec {
            id,
            tier,
            cores: self.cores,
            mips_per_core: self.mips_per_core,
            connection_time: Nanos::from_millis_f64(self.connection_ms),
            busy_power_w: self.busy_power_w,
            idle_power_w: self.idle_power_w,
        }
    }

    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if self.cores < 1 {
            out.push(("cores".into(), "must be >= 1".into()));
        }
        if !(self.mips_per_core > 0.0) {
            out.push(("mips_per_core".into(), "must be > 0".into()));
        }
        if !(self.connection_ms >= 0.0) {
            out.push(("connection_ms".into(), "must be >= 0".into()));
        }
        if !(self.idle_power_w >= 0.0) {
            out.push(("idle_power_w".into(), "must be >= 0".into()));
        }
        if !(self.busy_power_w >= self.idle_power_w) {
            out.push(("busy_power_w".into(), "must be >= idle_power_w".into()));
        }
        out
    }
}

impl Default for HostClass {
    fn default() -> Self {
        Self::edge()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FleetConfig {
    pub edge_hosts: u32,
    pub cloud_hosts: u32,
    pub edge: HostClass,
    pub cloud: HostClass,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            edge_hosts: 30,
            cloud_hosts: 20,
            edge: HostClass::edge(),
            cloud: HostClass::cloud(),
        }
    }
}

impl FleetConfig {
    /// Edge hosts take ids `0..edge_hosts`, cloud hosts follow.
    pub fn hosts(&self) -> Result<Vec<HostSpec>, InfraError> {
        if self.edge_hosts + self.cloud_hosts == 0 {
            return Err(InfraError::EmptyCluster);
        }
        let edge = (0..self.edge_hosts).map(|i| self.edge.spec(HostId(i), Tier::Edge));
        let cloud =
            (0..self.cloud_hosts).map(|i| self.cloud.spec(HostId(self.edge_hosts + i), Tier::Cloud));
        Ok(edge.chain(cloud).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkSpec {
    /// User to edge, both directions.
    pub user_edge_bps: f64,
    pub edge_cloud_bps: f64,
    pub tx_power_edge_w: f64,
    pub tx_power_cloud_w: f64,
    pub latency_min_ms: f64,
    pub latency_max_ms: f64,
    pub walk_step_ms: f64,
    pub handover_probability: f64,
    pub handover_penalty_ms: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            user_edge_bps: 100e6,
            edge_cloud_bps: 1e9,
            tx_power_edge_w: 0.5,
            tx_power_cloud_w: 1.5,
            latency_min_ms: 0.0,
            latency_max_ms: 20.0,
            walk_step_ms: 1.0,
            handover_probability: 0.001,
            handover_penalty_ms: 200.0,
        }
    }
}

impl NetworkSpec {
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if !(self.user_edge_bps > 0.0) {
            out.push(("user_edge_bps".into(), "must be > 0".into()));
        }
        if !(self.edge_cloud_bps > 0.0) {
            out.push(("edge_cloud_bps".into(), "must be > 0".into()));
        }
        if !(self.tx_power_edge_w >= 0.0) {
            out.push(("tx_power_edge_w".into(), "must be >= 0".into()));
        }
        if !(self.tx_power_cloud_w > self.tx_power_edge_w) {
            out.push(("tx_power_cloud_w".into(), "must be > tx_power_edge_w".into()));
        }
        if !(self.latency_min_ms >= 0.0 && self.latency_max_ms >= self.latency_min_ms) {
            out.push(("latency_max_ms".into(), "bounds must satisfy 0 <= min <= max".into()));
        }
        if !(self.walk_step_ms >= 0.0) {
            out.push(("walk_step_ms".into(), "must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.handover_probability) {
            out.push(("handover_probability".into(), "out of [0,1]".into()));
        }
        if !(self.handover_penalty_ms >= 0.0) {
            out.push(("handover_penalty_ms".into(), "must be >= 0".into()));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    UserToEdge,
    EdgeToUser,
    UserToCloud,
    CloudToUser,
    EdgeToCloud,
    CloudToEdge,
}

impl Route {
    pub fn uplink(tier: Tier) -> Route {
        match tier {
            Tier::Edge => Route::UserToEdge,
            Tier::Cloud => Route::UserToCloud,
        }
    }

    pub fn downlink(tier: Tier) -> Route {
        match tier {
            Tier::Edge => Route::EdgeToUser,
            Tier::Cloud => Route::CloudToUser,
        }
    }

    fn user_originated(self) -> bool {
        matches!(self, Route::UserToEdge | Route::UserToCloud)
    }

    /// Radio power spent while this route carries data.
    pub fn tx_power_w(self, net: &NetworkSpec) -> f64 {
        match self {
            Route::UserToEdge | Route::EdgeToUser => net.tx_power_edge_w,
            _ => net.tx_power_cloud_w,
        }
    }
}

/// Serialization time over each segment of `route`, plus the user's extra
/// latency on user-originated routes.
pub fn transfer_time(bits: f64, route: Route, net: &NetworkSpec, user_extra_latency: Nanos) -> Nanos {
    let bits = bits.max(0.0);
    let secs = match route {
        Route::UserToEdge | Route::EdgeToUser => bits / net.user_edge_bps,
        Route::EdgeToCloud | Route::CloudToEdge => bits / net.edge_cloud_bps,
        Route::UserToCloud | Route::CloudToUser => bits / net.user_edge_bps + bits / net.edge_cloud_bps,
    };
    let extra = if route.user_originated() {
        user_extra_latency
    } else {
        Nanos::ZERO
    };
    Nanos::from_secs_f64(secs) + extra
}

/// Cost of moving an unfinished task's state between hosts. Free within a tier.
pub fn migration_cost(state_bits: f64, from: &HostSpec, to: &HostSpec, net: &NetworkSpec) -> (Nanos, f64) {
    if from.tier == to.tier {
        return (Nanos::ZERO, 0.0);
    }
    let route = match to.tier {
        Tier::Cloud => Route::EdgeToCloud,
        Tier::Edge => Route::CloudToEdge,
    };
    let duration = transfer_time(state_bits, route, net, Nanos::ZERO) + to.connection_time;
    (duration, net.tx_power_cloud_w * duration.as_secs_f64())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserLink {
    pub extra_latency: Nanos,
    /// Handover in progress during the current interval.
    pub handover: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub hosts: Arc<[HostSpec]>,
    pub net: NetworkSpec,
    pub users: Vec<UserLink>,
    /// Cumulative core-busy time per host.
    pub busy: Vec<Nanos>,
    pub clock: Nanos,
}

impl ClusterState {
    pub fn new(hosts: Vec<HostSpec>, net: NetworkSpec, users: u32) -> Result<Self, InfraError> {
        if hosts.is_empty() {
            return Err(InfraError::EmptyCluster);
        }
        let start = Nanos::from_millis_f64(net.latency_min_ms);
        let busy = vec![Nanos::ZERO; hosts.len()];
        Ok(Self {
            hosts: hosts.into(),
            net,
            users: vec![UserLink { extra_latency: start, handover: false }; users as usize],
            busy,
            clock: Nanos::ZERO,
        })
    }

    pub fn host(&self, id: HostId) -> Option<&HostSpec> {
        self.hosts.get(id.index())
    }

    pub fn host_ids(&self) -> Vec<HostId> {
        self.hosts.iter().map(|h| h.id).collect()
    }

    pub fn total_capacity_mips(&self) -> f64 {
        self.hosts.iter().map(HostSpec::capacity_mips).sum()
    }

    pub fn idle_power_w(&self) -> f64 {
        self.hosts.iter().map(|h| h.idle_power_w).sum()
    }

    pub fn busy_power_w(&self) -> f64 {
        self.hosts.iter().map(|h| h.busy_power_w).sum()
    }

    /// Extra latency the user sees right now, including any handover penalty.
    pub fn user_latency(&self, user: UserId) -> Nanos {
        match self.users.get(user.0 as usize) {
            Some(link) if link.handover => {
                link.extra_latency + Nanos::from_millis_f64(self.net.handover_penalty_ms)
            }
            Some(link) => link.extra_latency,
            None => Nanos::ZERO,
        }
    }

    /// One interval of the bounded latency random walk and handover draws.
    pub fn mobility_step(&mut self, rng: &mut SeedStream) {
        let lo = Nanos::from_millis_f64(self.net.latency_min_ms);
        let hi = Nanos::from_millis_f64(self.net.latency_max_ms);
        let step = Nanos::from_millis_f64(self.net.walk_step_ms);
        for link in &mut self.users {
            let moved = if rng.chance(0.5) {
                link.extra_latency + step
            } else {
                link.extra_latency.saturating_sub(step)
            };
            link.extra_latency = moved.clamp(lo, hi);
            link.handover = rng.chance(self.net.handover_probability);
        }
    }
}

/// The desk-scale fleet from the evaluation setup, with default network constants.
pub fn default_cluster(n_edge: u32, n_cloud: u32) -> Result<ClusterState, InfraError> {
    let fleet = FleetConfig {
        edge_hosts: n_edge,
        cloud_hosts: n_cloud,
        ..Default::default()
    };
    ClusterState::new(fleet.hosts()?, NetworkSpec::default(), 0)
}
