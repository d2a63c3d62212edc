//! Domain types shared by every layer of the stack.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

/// Scenario-scoped node identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u16);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a traffic session within its scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub u32);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Position in a local planar frame, meters east (`x`) and north (`y`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPosition {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub altitude: Option<f64>,
}

impl GeoPosition {
    pub const fn new(x: f64, y: f64) -> Self {
        GeoPosition { x, y, altitude: None }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.altitude.map_or(true, f64::is_finite)
    }
}

/// Euclidean distance in the planar frame. Altitude is ignored.
pub fn distance_between(a: &GeoPosition, b: &GeoPosition) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Equirectangular projection of `(lat, lon)` degrees around `origin`.
pub fn project_equirectangular(lat: f64, lon: f64, origin_lat: f64, origin_lon: f64) -> GeoPosition {
    let phi0 = origin_lat.to_radians();
    let x = (lon - origin_lon).to_radians() * phi0.cos() * EARTH_RADIUS_M;
    let y = (lat - origin_lat).to_radians() * EARTH_RADIUS_M;
    GeoPosition::new(x, y)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error("initial energy must be positive and finite, got {0}")]
    NonPositiveInitial(f64),
    #[error("residual energy {residual} outside [0, {initial}]")]
    ResidualOutOfRange { residual: f64, initial: f64 },
}

/// Battery state: initial (`E0`) and residual (`Er`) energy in Joules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyState {
    initial_j: f64,
    residual_j: f64,
}

impl EnergyState {
    pub fn new(initial_j: f64, residual_j: f64) -> Result<Self, EnergyError> {
        if !(initial_j.is_finite() && initial_j > 0.0) {
            return Err(EnergyError::NonPositiveInitial(initial_j));
        }
        if !(residual_j.is_finite() && (0.0..=initial_j).contains(&residual_j)) {
            return Err(EnergyError::ResidualOutOfRange { residual: residual_j, initial: initial_j });
        }
        Ok(EnergyState { initial_j, residual_j })
    }

    pub fn full(initial_j: f64) -> Result<Self, EnergyError> {
        Self::new(initial_j, initial_j)
    }

    pub fn initial_j(&self) -> f64 {
        self.initial_j
    }

    pub fn residual_j(&self) -> f64 {
        self.residual_j
    }

    /// `Er / E0`, always within `[0, 1]`.
    pub fn ratio(&self) -> f64 {
        self.residual_j / self.initial_j
    }

    pub fn is_depleted(&self) -> bool {
        self.residual_j <= 0.0
    }

    /// Draws `joules` from the battery, flooring at zero.
    pub fn consume(&mut self, joules: f64) {
        if joules.is_finite() && joules > 0.0 {
            self.residual_j = (self.residual_j - joules).max(0.0);
        }
    }

    /// Overrides the residual as a fraction of the initial energy (clamped to `[0, 1]`).
    pub fn set_ratio(&mut self, ratio: f64) {
        let r = if ratio.is_finite() { ratio.clamp(0.0, 1.0) } else { 0.0 };
        self.residual_j = r * self.initial_j;
    }
}

/// Application payload unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub session: SessionId,
    pub seq: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub payload_len: u32,
    pub created_at: SimTime,
    pub assigned_next_hop: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmentError {
    #[error("a segment needs at least one packet")]
    Empty,
    #[error("segment of {len} packets exceeds segment size {max}")]
    TooLong { len: usize, max: usize },
    #[error("packet {seq} is routed to {found:?}, segment goes to {expected}")]
    MixedNextHop { seq: u64, expected: NodeId, found: Option<NodeId> },
}

/// MAC transmission unit: up to `segment_size` packets bound for one next hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Unique per originating node; stable across retransmission rounds.
    pub token: u64,
    packets: Vec<Packet>,
    next_hop: NodeId,
    pub retries_rts: u32,
    pub retries_data: u32,
}

impl Segment {
    pub fn new(token: u64, next_hop: NodeId, packets: Vec<Packet>, segment_size: usize) -> Result<Self, SegmentError> {
        if packets.is_empty() {
            return Err(SegmentError::Empty);
        }
        if packets.len() > segment_size {
            return Err(SegmentError::TooLong { len: packets.len(), max: segment_size });
        }
        if let Some(p) = packets.iter().find(|p| p.assigned_next_hop != Some(next_hop)) {
            return Err(SegmentError::MixedNextHop { seq: p.seq, expected: next_hop, found: p.assigned_next_hop });
        }
        Ok(Segment { token, packets, next_hop, retries_rts: 0, retries_data: 0 })
    }

    pub fn packets(&self) -> &[Packet] {
        &self.packets
    }

    pub fn into_packets(self) -> Vec<Packet> {
        self.packets
    }

    pub fn next_hop(&self) -> NodeId {
        self.next_hop
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }
}

/// Periodic control message advertising a node's cross-layer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beacon {
    pub origin: NodeId,
    pub position: GeoPosition,
    pub energy_ratio: f64,
    pub backlog: u64,
    pub issued_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Source,
    Relay,
    Gateway,
}

impl Role {
    pub fn accepts_traffic(&self) -> bool {
        matches!(self, Role::Gateway)
    }
}

/// Static description of one node at scenario start.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub id: NodeId,
    pub position: GeoPosition,
    pub energy: EnergyState,
    pub role: Role,
    pub fixed_backlog_offset: u64,
}
