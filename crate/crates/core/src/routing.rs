//! Distributed energy-aware next-hop selection.
//!
//! Every node keeps a beacon-fed table of its one-hop neighbors and, for
//! each queued packet, hands it to the neighbor `j` maximizing
//!
//! ```text
//! U_ij = eta_ij * max(q_i - q_j, 0) / q_i * (d_is - d_js) / d_is * Er_j / E0_j
//! ```
//!
//! where `eta_ij` is the link reliability estimate, `q` are queue backlogs,
//! `d_is`/`d_js` are distances to the destination and `Er/E0` is the
//! neighbor's residual energy ratio. Only neighbors with `U > 0` qualify.
//!
//! The objective is a plain function; alternatives can be registered by
//! name in a [`UtilityRegistry`] and picked from the scenario file.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::mac::QueuePair;
use crate::model::{distance_between, Beacon, EnergyState, GeoPosition, NodeId};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborRecord {
    pub id: NodeId,
    pub position: GeoPosition,
    /// `Er / E0` as last advertised.
    pub energy_ratio: f64,
    /// `q_j` as last advertised.
    pub backlog: u64,
    /// `eta_ij`, an EWMA of observed frame outcomes toward this neighbor.
    pub link_quality: f64,
    pub last_heard: SimTime,
}

#[derive(Debug, Clone)]
pub struct NeighborTable {
    records: BTreeMap<NodeId, NeighborRecord>,
    staleness_limit: SimTime,
}

impl NeighborTable {
    pub fn new(staleness_limit: SimTime) -> Self {
        NeighborTable { records: BTreeMap::new(), staleness_limit }
    }

    pub fn staleness_limit(&self) -> SimTime {
        self.staleness_limit
    }

    pub fn get(&self, id: NodeId) -> Option<&NeighborRecord> {
        self.records.get(&id)
    }

    pub fn get_mut(&mut self, id: NodeId) -> Option<&mut NeighborRecord> {
        self.records.get_mut(&id)
    }

    pub fn insert(&mut self, record: NeighborRecord) {
        self.records.insert(record.id, record);
    }

    pub fn iter(&self) -> impl Iterator<Item = &NeighborRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// The deciding node's own view.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfState {
    pub id: NodeId,
    pub position: GeoPosition,
    pub energy: EnergyState,
    /// `q_i`: local queue occupancy plus any injected offset.
    pub backlog: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutingError {
    #[error("node is at the destination; nothing to route")]
    DegenerateDestination,
    #[error("unknown utility function {0:?}")]
    UnknownUtility(String),
}

pub type UtilityFn = fn(&SelfState, &NeighborRecord, &GeoPosition) -> Result<f64, RoutingError>;

fn backlog_factor(me: &SelfState, nb: &NeighborRecord) -> f64 {
    if me.backlog == 0 {
        return 0.0;
    }
    let diff = me.backlog.saturating_sub(nb.backlog);
    diff as f64 / me.backlog as f64
}

fn progress_factor(me: &SelfState, nb: &NeighborRecord, dest: &GeoPosition) -> Result<f64, RoutingError> {
    let d_is = distance_between(&me.position, dest);
    if d_is == 0.0 {
        return Err(RoutingError::DegenerateDestination);
    }
    let d_js = distance_between(&nb.position, dest);
    Ok((d_is - d_js) / d_is)
}

/// The SEEK utility: reliability x normalized differential backlog x
/// normalized forward progress x residual energy ratio.
///
/// The backlog factor is 0 when `q_i = 0`. The result is negative for a
/// neighbor farther from the destination than this node, unless another
/// factor is zero.
pub fn compute_utility(me: &SelfState, nb: &NeighborRecord, dest: &GeoPosition) -> Result<f64, RoutingError> {
    let progress = progress_factor(me, nb, dest)?;
    Ok(nb.link_quality * backlog_factor(me, nb) * progress * nb.energy_ratio)
}

/// Pure geographic progress weighted by link reliability.
pub fn progress_utility(me: &SelfState, nb: &NeighborRecord, dest: &GeoPosition) -> Result<f64, RoutingError> {
    Ok(nb.link_quality * progress_factor(me, nb, dest)?)
}

/// Differential backlog gated on forward progress, ignoring energy.
pub fn backpressure_utility(me: &SelfState, nb: &NeighborRecord, dest: &GeoPosition) -> Result<f64, RoutingError> {
    let progress = progress_factor(me, nb, dest)?;
    Ok(if progress > 0.0 { nb.link_quality * backlog_factor(me, nb) } else { 0.0 })
}

/// Named utility functions selectable from a scenario.
#[derive(Debug, Clone)]
pub struct UtilityRegistry {
    entries: BTreeMap<String, UtilityFn>,
}

impl Default for UtilityRegistry {
    fn default() -> Self {
        let mut r = UtilityRegistry { entries: BTreeMap::new() };
        r.register("seek", compute_utility);
        r.register("progress", progress_utility);
        r.register("backpressure", backpressure_utility);
        r
    }
}

impl UtilityRegistry {
    pub fn register(&mut self, name: &str, f: UtilityFn) {
        self.entries.insert(name.to_string(), f);
    }

    pub fn get(&self, name: &str) -> Result<UtilityFn, RoutingError> {
        self.entries.get(name).copied().ok_or_else(|| RoutingError::UnknownUtility(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Best neighbor by SEEK utility. See [`select_next_hop_with`].
pub fn select_next_hop(me: &SelfState, table: &NeighborTable, dest: &GeoPosition) -> Option<NodeId> {
    select_next_hop_with(compute_utility, me, table, dest)
}

/// Argmax of `utility` over neighbors with strictly positive utility.
/// Ties go to the higher energy ratio, then the lower node id. `None` when
/// no neighbor qualifies or this node sits on the destination.
pub fn select_next_hop_with(
    utility: UtilityFn,
    me: &SelfState,
    table: &NeighborTable,
    dest: &GeoPosition,
) -> Option<NodeId> {
    let mut best: Option<(f64, f64, NodeId)> = None;
    for nb in table.iter() {
        let u = match utility(me, nb, dest) {
            Ok(u) => u,
            Err(RoutingError::DegenerateDestination) => return None,
            Err(_) => continue,
        };
        if !(u > 0.0) {
            continue;
        }
        let better = match best {
            None => true,
            // Ascending id iteration: equal (u, energy) keeps the earlier, lower id.
            Some((bu, be, _)) => u > bu || (u == bu && nb.energy_ratio > be),
        };
        if better {
            best = Some((u, nb.energy_ratio, nb.id));
        }
    }
    best.map(|(_, _, id)| id)
}

/// Routes the General Queue in FIFO order, at most `limit` packets. Each
/// packet whose destination position is known and has a feasible next hop
/// is stamped and moved on toward segmentation; the rest stay queued.
/// Returns the number routed.
pub fn assign_routes(
    utility: UtilityFn,
    me: &SelfState,
    queues: &mut QueuePair,
    table: &NeighborTable,
    dest_position: impl Fn(NodeId) -> Option<GeoPosition>,
    limit: usize,
) -> usize {
    // Selection depends only on the destination within one pass.
    let mut cache: BTreeMap<NodeId, Option<NodeId>> = BTreeMap::new();
    let mut left = limit;
    queues.route_with(|p| {
        if left == 0 {
            return None;
        }
        let hop = *cache
            .entry(p.dst)
            .or_insert_with(|| dest_position(p.dst).and_then(|d| select_next_hop_with(utility, me, table, &d)));
        if hop.is_some() {
            left -= 1;
        }
        hop
    })
}

/// `link_quality <- (1 - alpha) * link_quality + alpha * outcome`.
pub fn update_link_quality(record: &mut NeighborRecord, success: bool, alpha: f64) {
    let x = if success { 1.0 } else { 0.0 };
    record.link_quality = ((1.0 - alpha) * record.link_quality + alpha * x).clamp(0.0, 1.0);
}

/// Upserts the sender's record from a received beacon and counts the
/// reception as a link success.
pub fn ingest_beacon(table: &mut NeighborTable, beacon: &Beacon, now: SimTime, alpha: f64) {
    let rec = table.records.entry(beacon.origin).or_insert_with(|| NeighborRecord {
        id: beacon.origin,
        position: beacon.position,
        energy_ratio: beacon.energy_ratio,
        backlog: beacon.backlog,
        link_quality: 1.0,
        last_heard: now,
    });
    rec.position = beacon.position;
    rec.energy_ratio = beacon.energy_ratio.clamp(0.0, 1.0);
    rec.backlog = beacon.backlog;
    rec.last_heard = now;
    update_link_quality(rec, true, alpha);
}

pub fn build_beacon(me: &SelfState, now: SimTime) -> Beacon {
    Beacon {
        origin: me.id,
        position: me.position,
        energy_ratio: me.energy.ratio(),
        backlog: me.backlog,
        issued_at: now,
    }
}

/// Drops neighbors not heard for longer than the staleness limit.
pub fn evict_stale(table: &mut NeighborTable, now: SimTime) -> Vec<NodeId> {
    let limit = table.staleness_limit;
    let stale: Vec<NodeId> = table
        .records
        .values()
        .filter(|r| now.saturating_sub(r.last_heard) > limit)
        .map(|r| r.id)
        .collect();
    for id in &stale {
        table.records.remove(id);
    }
    stale
}
