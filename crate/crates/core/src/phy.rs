//! Statistical radio link model, airtime accounting and the shared medium.
//!
//! Link success is a table lookup against measured (distance, reliability)
//! points per data rate, linearly interpolated, decaying linearly to zero at
//! a hard cutoff distance. There is no SNR or fading model; overlapping
//! frames at a receiver are both lost (no capture).

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{distance_between, Beacon, GeoPosition, NodeId, Packet};
use crate::time::SimTime;

/// The 802.11b DSSS/CCK rates the radio supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DataRate {
    Mbps1,
    Mbps2,
    Mbps5_5,
    Mbps11,
}

impl DataRate {
    pub const ALL: [DataRate; 4] = [DataRate::Mbps1, DataRate::Mbps2, DataRate::Mbps5_5, DataRate::Mbps11];

    pub fn from_mbps(mbps: f64) -> Option<DataRate> {
        DataRate::ALL.into_iter().find(|r| (r.mbps() - mbps).abs() < 1e-9)
    }

    pub fn mbps(self) -> f64 {
        match self {
            DataRate::Mbps1 => 1.0,
            DataRate::Mbps2 => 2.0,
            DataRate::Mbps5_5 => 5.5,
            DataRate::Mbps11 => 11.0,
        }
    }

    pub fn kbps(self) -> u64 {
        match self {
            DataRate::Mbps1 => 1_000,
            DataRate::Mbps2 => 2_000,
            DataRate::Mbps5_5 => 5_500,
            DataRate::Mbps11 => 11_000,
        }
    }

    pub fn bits_per_sec(self) -> f64 {
        self.kbps() as f64 * 1e3
    }

    /// Time to clock `bits` onto the air at this rate, rounded to the nearest ns.
    pub fn bits_duration(self, bits: u64) -> SimTime {
        let num = bits as u128 * 1_000_000;
        let den = self.kbps() as u128;
        SimTime(((num + den / 2) / den) as u64)
    }
}

impl fmt::Display for DataRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Mbps", self.mbps())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhyError {
    #[error("no calibration row for {0}")]
    UnknownRate(DataRate),
    #[error("calibration for {rate} is invalid: {reason}")]
    InvalidCalibration { rate: DataRate, reason: String },
    #[error("cutoff distance {cutoff} m is below the farthest calibration point {max} m")]
    CutoffTooShort { cutoff: f64, max: f64 },
    #[error("node {0} started a transmission while already transmitting")]
    HalfDuplexViolation(NodeId),
}

/// One measured point: success probability at a given distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub distance_m: f64,
    pub probability: f64,
}

impl CalibrationPoint {
    pub const fn new(distance_m: f64, probability: f64) -> Self {
        CalibrationPoint { distance_m, probability }
    }
}

pub const DEFAULT_CUTOFF_M: f64 = 1942.0;
pub const DEFAULT_ONE_MBPS_ROBUSTNESS: f64 = 0.5;

/// Measured link reliability rows (distance m, delivered fraction).
pub const MEASURED_2_MBPS: [CalibrationPoint; 3] = [
    CalibrationPoint::new(495.2, 0.999),
    CalibrationPoint::new(771.2, 0.9977),
    CalibrationPoint::new(1019.0, 0.9808),
];
pub const MEASURED_5_5_MBPS: [CalibrationPoint; 3] = [
    CalibrationPoint::new(495.2, 0.9962),
    CalibrationPoint::new(771.2, 0.9603),
    CalibrationPoint::new(1019.0, 0.9716),
];
pub const MEASURED_11_MBPS: [CalibrationPoint; 3] = [
    CalibrationPoint::new(495.2, 0.8528),
    CalibrationPoint::new(771.2, 0.3156),
    CalibrationPoint::new(1019.0, 0.139),
];

/// Per-rate packet success probability as a function of distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    rows: BTreeMap<DataRate, Vec<CalibrationPoint>>,
    cutoff_distance: f64,
    control_rate: DataRate,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel::measured(DEFAULT_ONE_MBPS_ROBUSTNESS)
    }
}

impl LinkModel {
    pub fn new(
        rows: BTreeMap<DataRate, Vec<CalibrationPoint>>,
        cutoff_distance: f64,
        control_rate: DataRate,
    ) -> Result<Self, PhyError> {
        let mut max = 0.0f64;
        for (&rate, points) in &rows {
            let bad = |reason: &str| PhyError::InvalidCalibration { rate, reason: reason.to_string() };
            if points.is_empty() {
                return Err(bad("no points"));
            }
            for p in points {
                if !(p.distance_m.is_finite() && p.distance_m >= 0.0) {
                    return Err(bad("distances must be finite and non-negative"));
                }
                if !(0.0..=1.0).contains(&p.probability) {
                    return Err(bad("probabilities must lie in [0, 1]"));
                }
            }
            if points.windows(2).any(|w| w[1].distance_m <= w[0].distance_m) {
                return Err(bad("points must be sorted by strictly increasing distance"));
            }
            max = max.max(points[points.len() - 1].distance_m);
        }
        if !(cutoff_distance.is_finite() && cutoff_distance >= max) {
            return Err(PhyError::CutoffTooShort { cutoff: cutoff_distance, max });
        }
        Ok(LinkModel { rows, cutoff_distance, control_rate })
    }

    /// The measured table verbatim for 2, 5.5 and 11 Mbps. 1 Mbps has no
    /// measurements; its row is the 2 Mbps row pulled toward certainty:
    /// `p1 = 1 - robustness * (1 - p2)`.
    pub fn measured(one_mbps_robustness: f64) -> Self {
        let mut rows = BTreeMap::new();
        let one = MEASURED_2_MBPS
            .iter()
            .map(|p| CalibrationPoint::new(p.distance_m, 1.0 - one_mbps_robustness * (1.0 - p.probability)))
            .collect();
        rows.insert(DataRate::Mbps1, one);
        rows.insert(DataRate::Mbps2, MEASURED_2_MBPS.to_vec());
        rows.insert(DataRate::Mbps5_5, MEASURED_5_5_MBPS.to_vec());
        rows.insert(DataRate::Mbps11, MEASURED_11_MBPS.to_vec());
        LinkModel { rows, cutoff_distance: DEFAULT_CUTOFF_M, control_rate: DataRate::Mbps1 }
    }

    /// Replaces the listed rows and optionally the cutoff, revalidating the result.
    pub fn with_overrides(
        mut self,
        rows: BTreeMap<DataRate, Vec<CalibrationPoint>>,
        cutoff_distance: Option<f64>,
    ) -> Result<Self, PhyError> {
        self.rows.extend(rows);
        let cutoff = cutoff_distance.unwrap_or(self.cutoff_distance);
        LinkModel::new(self.rows, cutoff, self.control_rate)
    }

    pub fn with_control_rate(mut self, rate: DataRate) -> Self {
        self.control_rate = rate;
        self
    }

    pub fn cutoff_distance(&self) -> f64 {
        self.cutoff_distance
    }

    pub fn control_rate(&self) -> DataRate {
        self.control_rate
    }

    pub fn rows(&self) -> &BTreeMap<DataRate, Vec<CalibrationPoint>> {
        &self.rows
    }
}

/// Packet success probability for `rate` at `distance` meters.
///
/// Clamped below the first point, piecewise linear between points, linear
/// decay from the last point to zero at the cutoff, and exactly zero at or
/// beyond the cutoff.
pub fn link_reliability(model: &LinkModel, rate: DataRate, distance: f64) -> Result<f64, PhyError> {
    let points = model.rows.get(&rate).ok_or(PhyError::UnknownRate(rate))?;
    let d = distance.max(0.0);
    if d >= model.cutoff_distance {
        return Ok(0.0);
    }
    let first = points[0];
    if d <= first.distance_m {
        return Ok(first.probability);
    }
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if d <= b.distance_m {
            let t = (d - a.distance_m) / (b.distance_m - a.distance_m);
            return Ok(a.probability + t * (b.probability - a.probability));
        }
    }
    let last = points[points.len() - 1];
    let t = (d - last.distance_m) / (model.cutoff_distance - last.distance_m);
    Ok(last.probability * (1.0 - t))
}

/// Fixed per-frame overheads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhyConfig {
    /// MAC + network header bytes added to every DATA frame.
    pub header_bytes: u32,
    pub preamble: SimTime,
}

impl Default for PhyConfig {
    fn default() -> Self {
        PhyConfig { header_bytes: 40, preamble: SimTime::from_micros(192) }
    }
}

pub const RTS_BYTES: u32 = 20;
pub const CTS_BYTES: u32 = 14;
pub const BLOCK_ACK_BYTES: u32 = 18;
pub const BEACON_BYTES: u32 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Rts,
    Cts,
    Data,
    BlockAck,
    Beacon,
}

impl FrameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Rts => "rts",
            FrameKind::Cts => "cts",
            FrameKind::Data => "data",
            FrameKind::BlockAck => "block_ack",
            FrameKind::Beacon => "beacon",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Destination {
    Unicast(NodeId),
    Broadcast,
}

impl Destination {
    pub fn is(&self, node: NodeId) -> bool {
        matches!(self, Destination::Unicast(n) if *n == node)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FramePayload {
    /// Announces which segment packets follow and the burst length they occupy.
    Rts { token: u64, indices: Vec<u16>, burst: SimTime, exchange_end: SimTime },
    Cts { token: u64, burst: SimTime },
    Data { token: u64, index: u16, segment_len: u16, packet: Packet },
    BlockAck { token: u64, bitmap: Vec<bool> },
    Beacon(Beacon),
}

/// On-air unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub src: NodeId,
    pub dst: Destination,
    pub size_bytes: u32,
    pub rate: DataRate,
    /// Virtual carrier sense: overhearers defer until this instant.
    pub nav_until: Option<SimTime>,
    pub payload: FramePayload,
}

impl Frame {
    pub fn kind(&self) -> FrameKind {
        match self.payload {
            FramePayload::Rts { .. } => FrameKind::Rts,
            FramePayload::Cts { .. } => FrameKind::Cts,
            FramePayload::Data { .. } => FrameKind::Data,
            FramePayload::BlockAck { .. } => FrameKind::BlockAck,
            FramePayload::Beacon(_) => FrameKind::Beacon,
        }
    }

    pub fn is_control(&self) -> bool {
        self.kind() != FrameKind::Data
    }
}

/// `preamble + (size + header) * 8 / rate`, where only DATA frames carry
/// the configured header; control frame sizes are whole frames already.
pub fn frame_airtime(frame: &Frame, phy: &PhyConfig) -> SimTime {
    let header = if frame.is_control() { 0 } else { phy.header_bytes };
    airtime_for(frame.size_bytes + header, frame.rate, phy)
}

/// Airtime of `on_air_bytes` (header included) at `rate`.
pub fn airtime_for(on_air_bytes: u32, rate: DataRate, phy: &PhyConfig) -> SimTime {
    phy.preamble + rate.bits_duration(on_air_bytes as u64 * 8)
}

/// A frame occupying the medium over `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub frame: Frame,
    pub tx: NodeId,
    pub start: SimTime,
    pub end: SimTime,
}

impl Transmission {
    pub fn new(frame: Frame, tx: NodeId, start: SimTime, phy: &PhyConfig) -> Self {
        let end = start + frame_airtime(&frame, phy);
        Transmission { frame, tx, start, end }
    }
}

/// A reception due at `at`, to be collected with [`Medium::take_reception`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledReception {
    pub tx_id: u64,
    pub receiver: NodeId,
    pub at: SimTime,
}

/// Everything the receiver needs to decide whether a frame got through.
#[derive(Debug, Clone, PartialEq)]
pub struct Reception {
    pub tx_id: u64,
    pub tx: NodeId,
    pub receiver: NodeId,
    pub frame: Frame,
    pub distance: f64,
    pub collided: bool,
    pub deaf: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossReason {
    Collision,
    ChannelError,
    Deaf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceptionOutcome {
    Delivered,
    Lost(LossReason),
}

/// Collision dominates, then half-duplex deafness, then a Bernoulli draw
/// against the calibrated link reliability.
pub fn resolve_reception<R: Rng + ?Sized>(
    model: &LinkModel,
    reception: &Reception,
    rng: &mut R,
) -> Result<ReceptionOutcome, PhyError> {
    if reception.collided {
        return Ok(ReceptionOutcome::Lost(LossReason::Collision));
    }
    if reception.deaf {
        return Ok(ReceptionOutcome::Lost(LossReason::Deaf));
    }
    let p = link_reliability(model, reception.frame.rate, reception.distance)?;
    if rng.gen::<f64>() < p {
        Ok(ReceptionOutcome::Delivered)
    } else {
        Ok(ReceptionOutcome::Lost(LossReason::ChannelError))
    }
}

#[derive(Debug, Clone)]
struct ActiveTx {
    id: u64,
    tx: NodeId,
    start: SimTime,
    end: SimTime,
}

/// Shared broadcast medium: who hears whom, and which receptions overlap.
#[derive(Debug, Clone)]
pub struct Medium {
    positions: BTreeMap<NodeId, GeoPosition>,
    cutoff: f64,
    active: Vec<ActiveTx>,
    pending: BTreeMap<(u64, NodeId), Reception>,
    next_id: u64,
}

impl Medium {
    pub fn new(positions: impl IntoIterator<Item = (NodeId, GeoPosition)>, cutoff: f64) -> Self {
        Medium {
            positions: positions.into_iter().collect(),
            cutoff,
            active: Vec::new(),
            pending: BTreeMap::new(),
            next_id: 0,
        }
    }

    pub fn set_position(&mut self, node: NodeId, pos: GeoPosition) {
        self.positions.insert(node, pos);
    }

    pub fn position(&self, node: NodeId) -> Option<GeoPosition> {
        self.positions.get(&node).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.positions.keys().copied()
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        match (self.positions.get(&a), self.positions.get(&b)) {
            (Some(pa), Some(pb)) => distance_between(pa, pb),
            _ => f64::INFINITY,
        }
    }

    pub fn audible(&self, a: NodeId, b: NodeId) -> bool {
        a != b && self.distance(a, b) < self.cutoff
    }

    /// Nodes (other than `node`) within carrier-sense range of `node`.
    pub fn neighbors_of(&self, node: NodeId) -> Vec<NodeId> {
        self.positions.keys().copied().filter(|&n| self.audible(node, n)).collect()
    }

    pub fn is_transmitting(&self, node: NodeId, now: SimTime) -> bool {
        self.active.iter().any(|a| a.tx == node && a.start <= now && now < a.end)
    }

    /// Physical carrier sense: own transmission or any audible frame on air.
    pub fn is_busy_for(&self, node: NodeId, now: SimTime) -> bool {
        self.active
            .iter()
            .any(|a| a.start <= now && now < a.end && (a.tx == node || self.audible(a.tx, node)))
    }

    /// Puts `t` on the air and schedules a reception at every node in range.
    pub fn transmit(&mut self, t: Transmission) -> Result<(u64, Vec<ScheduledReception>), PhyError> {
        if self.active.iter().any(|a| a.tx == t.tx && a.end > t.start) {
            return Err(PhyError::HalfDuplexViolation(t.tx));
        }
        self.active.retain(|a| a.end > t.start);
        let id = self.next_id;
        self.next_id += 1;

        // The transmitter goes deaf to everything it is currently receiving.
        for r in self.pending.values_mut().filter(|r| r.receiver == t.tx) {
            r.deaf = true;
        }

        let receivers = self.neighbors_of(t.tx);
        let mut scheduled = Vec::with_capacity(receivers.len());
        for rx in receivers {
            let mut collided = false;
            let mut deaf = false;
            for a in self.active.iter().filter(|a| a.end > t.start) {
                if a.tx == rx {
                    deaf = true;
                } else if self.audible(a.tx, rx) {
                    collided = true;
                    if let Some(other) = self.pending.get_mut(&(a.id, rx)) {
                        other.collided = true;
                    }
                }
            }
            let distance = self.distance(t.tx, rx);
            self.pending.insert(
                (id, rx),
                Reception { tx_id: id, tx: t.tx, receiver: rx, frame: t.frame.clone(), distance, collided, deaf },
            );
            scheduled.push(ScheduledReception { tx_id: id, receiver: rx, at: t.end });
        }
        self.active.push(ActiveTx { id, tx: t.tx, start: t.start, end: t.end });
        Ok((id, scheduled))
    }

    /// Removes and returns a finished reception with its final collision flags.
    pub fn take_reception(&mut self, s: ScheduledReception) -> Option<Reception> {
        self.pending.remove(&(s.tx_id, s.receiver))
    }

    pub fn end_transmission(&mut self, tx_id: u64) {
        self.active.retain(|a| a.id != tx_id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SessionId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn reliability_table_points() {
        let m = LinkModel::default();
        assert!(close(link_reliability(&m, DataRate::Mbps2, 495.2).unwrap(), 0.999));
        assert!(close(link_reliability(&m, DataRate::Mbps11, 1019.0).unwrap(), 0.139));
        assert_eq!(link_reliability(&m, DataRate::Mbps2, 1942.0).unwrap(), 0.0);
        assert_eq!(link_reliability(&m, DataRate::Mbps2, 2500.0).unwrap(), 0.0);
        assert!(close(link_reliability(&m, DataRate::Mbps5_5, 100.0).unwrap(), 0.9962));
        // Midpoint between the 495.2 m and 771.2 m rows.
        assert!(close(link_reliability(&m, DataRate::Mbps2, 633.2).unwrap(), 0.99835));
    }

    #[test]
    fn non_monotone_row_is_kept_verbatim() {
        let m = LinkModel::default();
        let p771 = link_reliability(&m, DataRate::Mbps5_5, 771.2).unwrap();
        let p1019 = link_reliability(&m, DataRate::Mbps5_5, 1019.0).unwrap();
        assert!(p771 < p1019);
    }

    #[test]
    fn one_mbps_row_is_derived() {
        let m = LinkModel::default();
        assert!(close(link_reliability(&m, DataRate::Mbps1, 1019.0).unwrap(), 1.0 - 0.5 * (1.0 - 0.9808)));
        let strict = LinkModel::measured(1.0);
        assert!(close(link_reliability(&strict, DataRate::Mbps1, 1019.0).unwrap(), 0.9808));
    }

    #[test]
    fn tail_decays_linearly_to_cutoff() {
        let m = LinkModel::default();
        let mid = (1019.0 + 1942.0) / 2.0;
        assert!(close(link_reliability(&m, DataRate::Mbps2, mid).unwrap(), 0.9808 / 2.0));
    }

    #[test]
    fn unknown_rate_and_bad_tables() {
        let mut rows = BTreeMap::new();
        rows.insert(DataRate::Mbps2, MEASURED_2_MBPS.to_vec());
        let m = LinkModel::new(rows.clone(), 1942.0, DataRate::Mbps2).unwrap();
        assert_eq!(link_reliability(&m, DataRate::Mbps11, 10.0), Err(PhyError::UnknownRate(DataRate::Mbps11)));
        assert!(matches!(LinkModel::new(rows.clone(), 900.0, DataRate::Mbps2), Err(PhyError::CutoffTooShort { .. })));
        rows.insert(DataRate::Mbps11, vec![CalibrationPoint::new(10.0, 1.2)]);
        assert!(LinkModel::new(rows.clone(), 1942.0, DataRate::Mbps2).is_err());
        rows.insert(DataRate::Mbps11, vec![CalibrationPoint::new(10.0, 0.5), CalibrationPoint::new(5.0, 0.5)]);
        assert!(LinkModel::new(rows, 1942.0, DataRate::Mbps2).is_err());
    }

    fn data_frame(len: u32, rate: DataRate) -> Frame {
        Frame {
            src: NodeId(0),
            dst: Destination::Unicast(NodeId(1)),
            size_bytes: len,
            rate,
            nav_until: None,
            payload: FramePayload::Data {
                token: 0,
                index: 0,
                segment_len: 1,
                packet: Packet {
                    session: SessionId(0),
                    seq: 0,
                    src: NodeId(0),
                    dst: NodeId(1),
                    payload_len: len,
                    created_at: SimTime::ZERO,
                    assigned_next_hop: Some(NodeId(1)),
                },
            },
        }
    }

    fn cts_frame(src: u16, dst: u16) -> Frame {
        Frame {
            src: NodeId(src),
            dst: Destination::Unicast(NodeId(dst)),
            size_bytes: CTS_BYTES,
            rate: DataRate::Mbps1,
            nav_until: None,
            payload: FramePayload::Cts { token: 0, burst: SimTime::ZERO },
        }
    }

    #[test]
    fn airtime_examples() {
        let phy = PhyConfig::default();
        assert_eq!(frame_airtime(&data_frame(1000, DataRate::Mbps1), &phy), SimTime::from_micros(8512));
        assert_eq!(frame_airtime(&data_frame(1000, DataRate::Mbps11), &phy), SimTime::from_nanos(948_364));
        assert_eq!(frame_airtime(&cts_frame(0, 1), &phy), SimTime::from_micros(304));
    }

    #[test]
    fn airtime_is_monotone() {
        let phy = PhyConfig::default();
        let mut prev_rate = SimTime::MAX;
        for rate in DataRate::ALL {
            let t = frame_airtime(&data_frame(1000, rate), &phy);
            assert!(t < prev_rate);
            prev_rate = t;
            let mut prev = SimTime::ZERO;
            for len in [1u32, 10, 100, 1000, 3000] {
                let t = frame_airtime(&data_frame(len, rate), &phy);
                assert!(t > prev);
                prev = t;
            }
        }
    }

    fn medium(points: &[(u16, f64)]) -> Medium {
        Medium::new(points.iter().map(|&(id, x)| (NodeId(id), GeoPosition::new(x, 0.0))), DEFAULT_CUTOFF_M)
    }

    #[test]
    fn broadcast_fan_out_and_cutoff() {
        let phy = PhyConfig::default();
        let mut m = medium(&[(0, 0.0), (1, 100.0), (2, 200.0), (3, 2500.0)]);
        let t = Transmission::new(cts_frame(0, 1), NodeId(0), SimTime::ZERO, &phy);
        let (_, rx) = m.transmit(t).unwrap();
        let ids: Vec<_> = rx.iter().map(|r| r.receiver).collect();
        assert_eq!(ids, vec![NodeId(1), NodeId(2)]);
        assert!(rx.iter().all(|r| r.at == SimTime::from_micros(304)));
    }

    #[test]
    fn overlapping_frames_collide_at_common_receiver() {
        let phy = PhyConfig::default();
        let mut m = medium(&[(0, 0.0), (1, 500.0), (2, 1000.0)]);
        let a = Transmission::new(cts_frame(0, 1), NodeId(0), SimTime::ZERO, &phy);
        let b = Transmission::new(cts_frame(2, 1), NodeId(2), SimTime::from_micros(100), &phy);
        let (_, ra) = m.transmit(a).unwrap();
        let (_, rb) = m.transmit(b).unwrap();
        let at1 = |v: &Vec<ScheduledReception>| *v.iter().find(|r| r.receiver == NodeId(1)).unwrap();
        let first = m.take_reception(at1(&ra)).unwrap();
        let second = m.take_reception(at1(&rb)).unwrap();
        assert!(first.collided && second.collided);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = LinkModel::default();
        assert_eq!(resolve_reception(&model, &first, &mut rng).unwrap(), ReceptionOutcome::Lost(LossReason::Collision));
    }

    #[test]
    fn back_to_back_frames_do_not_collide() {
        let phy = PhyConfig::default();
        let mut m = medium(&[(0, 0.0), (1, 500.0), (2, 1000.0)]);
        let a = Transmission::new(cts_frame(0, 1), NodeId(0), SimTime::ZERO, &phy);
        let end = a.end;
        let (_, ra) = m.transmit(a).unwrap();
        let b = Transmission::new(cts_frame(2, 1), NodeId(2), end, &phy);
        let (_, rb) = m.transmit(b).unwrap();
        for s in ra.into_iter().chain(rb) {
            assert!(!m.take_reception(s).unwrap().collided);
        }
    }

    #[test]
    fn half_duplex() {
        let phy = PhyConfig::default();
        let mut m = medium(&[(0, 0.0), (1, 500.0)]);
        let a = Transmission::new(cts_frame(0, 1), NodeId(0), SimTime::ZERO, &phy);
        let (_, ra) = m.transmit(a).unwrap();
        // Node 1 keys up mid-reception: it cannot hear node 0's frame.
        let b = Transmission::new(cts_frame(1, 0), NodeId(1), SimTime::from_micros(50), &phy);
        let (_, rb) = m.transmit(b).unwrap();
        assert!(m.take_reception(ra[0]).unwrap().deaf);
        assert!(m.take_reception(rb[0]).unwrap().deaf);
        let again = Transmission::new(cts_frame(0, 1), NodeId(0), SimTime::from_micros(60), &phy);
        assert_eq!(m.transmit(again).unwrap_err(), PhyError::HalfDuplexViolation(NodeId(0)));
        assert!(m.is_busy_for(NodeId(0), SimTime::from_micros(60)));
        assert!(!m.is_busy_for(NodeId(0), SimTime::from_micros(400)));
    }

    #[test]
    fn certain_link_always_delivers() {
        let mut rows = BTreeMap::new();
        rows.insert(DataRate::Mbps1, vec![CalibrationPoint::new(1500.0, 1.0)]);
        let model = LinkModel::new(rows, 1942.0, DataRate::Mbps1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = Reception {
            tx_id: 0,
            tx: NodeId(0),
            receiver: NodeId(1),
            frame: cts_frame(0, 1),
            distance: 1000.0,
            collided: false,
            deaf: false,
        };
        for _ in 0..1000 {
            assert_eq!(resolve_reception(&model, &r, &mut rng).unwrap(), ReceptionOutcome::Delivered);
        }
    }

    #[test]
    fn empirical_delivery_matches_table() {
        let model = LinkModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut frame = data_frame(1000, DataRate::Mbps11);
        frame.rate = DataRate::Mbps11;
        let r = Reception { tx_id: 0, tx: NodeId(0), receiver: NodeId(1), frame, distance: 495.2, collided: false, deaf: false };
        let n = 10_000;
        let ok = (0..n)
            .filter(|_| resolve_reception(&model, &r, &mut rng).unwrap() == ReceptionOutcome::Delivered)
            .count();
        let p = 0.8528;
        let tol = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((ok as f64 / n as f64 - p).abs() <= tol);
    }
}
