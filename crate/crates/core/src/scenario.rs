//! Scenario files: a strict JSON schema with defaults for everything but
//! the topology, and validation into the typed [`ValidatedScenario`] that
//! the engine runs.
//!
//! Times in the file are seconds (`*_s`) or microseconds (`*_us`), rates
//! are Mbps and positions are meters in a local planar frame (or lat/lon
//! projected around `geo_origin`). See `docs/scenario.md` for the schema.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::mac::{MacConfig, MacConfigError};
use crate::model::{project_equirectangular, EnergyState, GeoPosition, NodeConfig, NodeId, Role, SessionId};
use crate::phy::{
    airtime_for, CalibrationPoint, DataRate, LinkModel, PhyConfig, PhyError, BLOCK_ACK_BYTES, CTS_BYTES,
    DEFAULT_CUTOFF_M, DEFAULT_ONE_MBPS_ROBUSTNESS,
};
use crate::routing::{UtilityFn, UtilityRegistry};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("JSON syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("duplicate node id {0}")]
    DuplicateNodeId(u16),
    #[error("session {session} references unknown node {node}")]
    UnknownSessionEndpoint { session: usize, node: u16 },
    #[error("unsupported data rate {0} Mbps (expected 1, 2, 5.5 or 11)")]
    UnsupportedDataRate(f64),
    #[error("{0} must be positive")]
    NonPositiveDuration(&'static str),
    #[error("warmup {warmup_s} s must be shorter than duration {duration_s} s")]
    WarmupTooLong { warmup_s: f64, duration_s: f64 },
    #[error("session {index}: {reason}")]
    InvalidSession { index: usize, reason: String },
    #[error("node {node}: {reason}")]
    InvalidNode { node: u16, reason: String },
    #[error("world event {index}: {reason}")]
    InvalidWorldEvent { index: usize, reason: String },
    #[error("link model: {0}")]
    LinkModel(#[from] PhyError),
    #[error("mac: {0}")]
    Mac(#[from] MacConfigError),
    #[error("routing: {0}")]
    Routing(String),
    #[error("{0}")]
    Invalid(String),
}

fn default_energy_j() -> f64 {
    10_000.0
}
fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: u16,
    #[serde(default)]
    pub x: Option<f64>,
    #[serde(default)]
    pub y: Option<f64>,
    #[serde(default)]
    pub lat: Option<f64>,
    #[serde(default)]
    pub lon: Option<f64>,
    #[serde(default)]
    pub altitude: Option<f64>,
    #[serde(default = "default_role")]
    pub role: Role,
    #[serde(default = "default_energy_j")]
    pub energy_j: f64,
    /// Residual energy at start as a fraction of `energy_j`.
    #[serde(default = "one")]
    pub residual_ratio: f64,
    #[serde(default)]
    pub backlog_offset: u64,
}

fn default_role() -> Role {
    Role::Relay
}

fn default_payload() -> u32 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSpec {
    pub src: u16,
    pub dst: u16,
    pub rate_pps: f64,
    #[serde(default = "default_payload")]
    pub payload_bytes: u32,
    #[serde(default)]
    pub start_s: f64,
    /// Defaults to the end of the run.
    #[serde(default)]
    pub stop_s: Option<f64>,
    /// Overrides the destination coordinates used for routing; defaults to
    /// the destination node's configured position.
    #[serde(default)]
    pub dst_position: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkModelSpec {
    pub one_mbps_robustness: f64,
    pub cutoff_m: Option<f64>,
    /// Replacement calibration rows keyed by rate in Mbps ("1", "2", "5.5",
    /// "11"); each point is `[distance_m, probability]`.
    pub rows: BTreeMap<String, Vec<[f64; 2]>>,
}

impl Default for LinkModelSpec {
    fn default() -> Self {
        LinkModelSpec { one_mbps_robustness: DEFAULT_ONE_MBPS_ROBUSTNESS, cutoff_m: None, rows: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioSpec {
    pub data_rate_mbps: f64,
    pub control_rate_mbps: f64,
    pub beacon_period_s: f64,
    /// A neighbor silent for this many beacon periods is forgotten.
    pub staleness_periods: f64,
    pub header_bytes: u32,
    pub preamble_us: u64,
    pub tx_power_w: f64,
    pub rx_power_w: f64,
    pub link_model: LinkModelSpec,
}

impl Default for RadioSpec {
    fn default() -> Self {
        let phy = PhyConfig::default();
        RadioSpec {
            data_rate_mbps: 1.0,
            control_rate_mbps: 1.0,
            beacon_period_s: 1.0,
            staleness_periods: 3.0,
            header_bytes: phy.header_bytes,
            preamble_us: phy.preamble.as_nanos() / 1000,
            tx_power_w: 1.0,
            rx_power_w: 0.0,
            link_model: LinkModelSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacSpec {
    pub slot_us: u64,
    pub sifs_us: u64,
    pub difs_us: u64,
    pub data_frame_gap_us: u64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub cts_timeout_us: u64,
    pub ack_timeout_us: u64,
    pub max_rts_retries: u32,
    pub max_data_retries: u32,
    pub arq: bool,
    pub segment_size: usize,
    pub queue_capacity: usize,
    pub virtual_carrier_sense: bool,
    pub eifs: bool,
}

impl Default for MacSpec {
    fn default() -> Self {
        let m = MacConfig::default();
        let us = |t: SimTime| t.as_nanos() / 1000;
        MacSpec {
            slot_us: us(m.slot_time),
            sifs_us: us(m.sifs),
            difs_us: us(m.difs),
            data_frame_gap_us: us(m.data_frame_gap),
            cw_min: m.cw_min,
            cw_max: m.cw_max,
            cts_timeout_us: us(m.cts_timeout),
            ack_timeout_us: us(m.ack_timeout),
            max_rts_retries: m.max_rts_retries,
            max_data_retries: m.max_data_retries,
            arq: m.arq_enabled,
            segment_size: m.segment_size,
            queue_capacity: m.queue_capacity,
            virtual_carrier_sense: m.virtual_carrier_sense,
            eifs: m.eifs,
        }
    }
}

impl MacSpec {
    pub fn to_config(&self) -> MacConfig {
        MacConfig {
            slot_time: SimTime::from_micros(self.slot_us),
            sifs: SimTime::from_micros(self.sifs_us),
            difs: SimTime::from_micros(self.difs_us),
            data_frame_gap: SimTime::from_micros(self.data_frame_gap_us),
            cw_min: self.cw_min,
            cw_max: self.cw_max,
            cts_timeout: SimTime::from_micros(self.cts_timeout_us),
            ack_timeout: SimTime::from_micros(self.ack_timeout_us),
            max_rts_retries: self.max_rts_retries,
            max_data_retries: self.max_data_retries,
            arq_enabled: self.arq,
            segment_size: self.segment_size,
            queue_capacity: self.queue_capacity,
            virtual_carrier_sense: self.virtual_carrier_sense,
            eifs: self.eifs,
        }
    }
}

/// Which queues count toward the backlog `q` a node advertises and uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BacklogScope {
    /// Every packet the node holds, including the segment in the MAC.
    All,
    /// Only packets still waiting in the General Queue.
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutingSpec {
    pub utility: String,
    pub ewma_alpha: f64,
    pub backlog_scope: BacklogScope,
}

impl Default for RoutingSpec {
    fn default() -> Self {
        RoutingSpec { utility: "seek".into(), ewma_alpha: 0.1, backlog_scope: BacklogScope::All }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficSpec {
    /// Uniform jitter on each inter-arrival, as a fraction of the interval.
    pub jitter: f64,
}

impl Default for TrafficSpec {
    fn default() -> Self {
        TrafficSpec { jitter: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorldEventSpec {
    SetBacklogOffset { at_s: f64, node: u16, count: u64 },
    SetResidualEnergy { at_s: f64, node: u16, ratio: f64 },
    MoveNode { at_s: f64, node: u16, x: f64, y: f64 },
    StartSession { at_s: f64, session: usize },
    StopSession { at_s: f64, session: usize },
}

impl WorldEventSpec {
    pub fn at_s(&self) -> f64 {
        match *self {
            WorldEventSpec::SetBacklogOffset { at_s, .. }
            | WorldEventSpec::SetResidualEnergy { at_s, .. }
            | WorldEventSpec::MoveNode { at_s, .. }
            | WorldEventSpec::StartSession { at_s, .. }
            | WorldEventSpec::StopSession { at_s, .. } => at_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    pub duration_s: f64,
    pub seed: u64,
    pub warmup_s: f64,
    pub metrics_tick_s: f64,
    pub relay_bin_s: f64,
    pub relay_window_s: f64,
    /// Keep the full NDJSON trace in memory (the digest is always computed).
    pub record_trace: bool,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            duration_s: 300.0,
            seed: 1,
            warmup_s: 30.0,
            metrics_tick_s: 1.0,
            relay_bin_s: 10.0,
            relay_window_s: 60.0,
            record_trace: false,
        }
    }
}

/// The document as written, defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub geo_origin: Option<LatLon>,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub sessions: Vec<SessionSpec>,
    #[serde(default)]
    pub radio: RadioSpec,
    #[serde(default)]
    pub mac: MacSpec,
    #[serde(default)]
    pub routing: RoutingSpec,
    #[serde(default)]
    pub traffic: TrafficSpec,
    #[serde(default)]
    pub world_events: Vec<WorldEventSpec>,
    #[serde(default)]
    pub sim: SimSpec,
}

/// One traffic flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: SessionId,
    pub src: NodeId,
    pub dst: NodeId,
    pub rate_pps: f64,
    pub payload_bytes: u32,
    pub start: SimTime,
    pub stop: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorldAction {
    SetBacklogOffset { node: NodeId, count: u64 },
    SetResidualEnergy { node: NodeId, ratio: f64 },
    MoveNode { node: NodeId, position: GeoPosition },
    StartSession(SessionId),
    StopSession(SessionId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldEvent {
    pub at: SimTime,
    pub action: WorldAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    pub data_rate: DataRate,
    pub beacon_period: SimTime,
    pub staleness: SimTime,
    pub link_model: LinkModel,
    pub phy: PhyConfig,
    pub tx_power_w: f64,
    pub rx_power_w: f64,
}

#[derive(Debug, Clone)]
pub struct RoutingConfig {
    pub utility_name: String,
    pub utility: UtilityFn,
    pub ewma_alpha: f64,
    pub backlog_scope: BacklogScope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub duration: SimTime,
    pub seed: u64,
    pub warmup: SimTime,
    pub metrics_tick: SimTime,
    pub relay_bin: SimTime,
    pub relay_window: SimTime,
    pub record_trace: bool,
}

/// A scenario that passed every check, in engine units.
#[derive(Debug, Clone)]
pub struct ValidatedScenario {
    pub name: String,
    pub nodes: Vec<NodeConfig>,
    pub sessions: Vec<Session>,
    /// Destination coordinates known to every router.
    pub destinations: BTreeMap<NodeId, GeoPosition>,
    pub radio: RadioConfig,
    pub mac: MacConfig,
    pub routing: RoutingConfig,
    pub jitter: f64,
    pub world_events: Vec<WorldEvent>,
    pub sim: SimConfig,
}

impl ValidatedScenario {
    pub fn node(&self, id: NodeId) -> Option<&NodeConfig> {
        self.nodes.iter().find(|n| n.id == id)
    }
}

/// Parses a scenario document. Syntax errors carry line and column; type
/// and unknown-field errors carry the JSON path.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ScenarioError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    parse_scenario_value(value)
}

pub fn parse_scenario_value(value: Value) -> Result<Scenario, ScenarioError> {
    serde_path_to_error::deserialize(value).map_err(|e| ScenarioError::Schema {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

/// Parse and validate in one step.
pub fn load_scenario(text: &str) -> Result<ValidatedScenario, ScenarioError> {
    validate_scenario(&parse_scenario(text)?)
}

fn rate(mbps: f64) -> Result<DataRate, ScenarioError> {
    DataRate::from_mbps(mbps).ok_or(ScenarioError::UnsupportedDataRate(mbps))
}

fn positive_secs(s: f64, what: &'static str) -> Result<SimTime, ScenarioError> {
    if !(s.is_finite() && s > 0.0) {
        return Err(ScenarioError::NonPositiveDuration(what));
    }
    Ok(SimTime::from_secs_f64(s))
}

fn node_position(n: &NodeSpec, origin: Option<&LatLon>) -> Result<GeoPosition, ScenarioError> {
    let bad = |reason: &str| ScenarioError::InvalidNode { node: n.id, reason: reason.to_string() };
    let mut pos = match (n.x, n.y, n.lat, n.lon) {
        (Some(x), Some(y), None, None) => GeoPosition::new(x, y),
        (None, None, Some(lat), Some(lon)) => {
            let o = origin.ok_or_else(|| bad("lat/lon positions need a geo_origin"))?;
            project_equirectangular(lat, lon, o.lat, o.lon)
        }
        _ => return Err(bad("give either x and y, or lat and lon")),
    };
    pos.altitude = n.altitude;
    if !pos.is_finite() {
        return Err(bad("position must be finite"));
    }
    Ok(pos)
}

/// Checks cross-references and ranges and converts to engine units.
pub fn validate_scenario(doc: &Scenario) -> Result<ValidatedScenario, ScenarioError> {
    let duration = positive_secs(doc.sim.duration_s, "sim.duration_s")?;
    if !(doc.sim.warmup_s.is_finite() && doc.sim.warmup_s >= 0.0 && doc.sim.warmup_s < doc.sim.duration_s) {
        return Err(ScenarioError::WarmupTooLong { warmup_s: doc.sim.warmup_s, duration_s: doc.sim.duration_s });
    }
    let sim = SimConfig {
        duration,
        seed: doc.sim.seed,
        warmup: SimTime::from_secs_f64(doc.sim.warmup_s),
        metrics_tick: positive_secs(doc.sim.metrics_tick_s, "sim.metrics_tick_s")?,
        relay_bin: positive_secs(doc.sim.relay_bin_s, "sim.relay_bin_s")?,
        relay_window: positive_secs(doc.sim.relay_window_s, "sim.relay_window_s")?,
        record_trace: doc.sim.record_trace,
    };

    if doc.nodes.is_empty() {
        return Err(ScenarioError::Invalid("a scenario needs at least one node".into()));
    }
    let mut ids = BTreeSet::new();
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for n in &doc.nodes {
        if !ids.insert(n.id) {
            return Err(ScenarioError::DuplicateNodeId(n.id));
        }
        let position = node_position(n, doc.geo_origin.as_ref())?;
        if !(0.0..=1.0).contains(&n.residual_ratio) {
            return Err(ScenarioError::InvalidNode { node: n.id, reason: "residual_ratio must lie in [0, 1]".into() });
        }
        let energy = EnergyState::new(n.energy_j, n.energy_j * n.residual_ratio)
            .map_err(|e| ScenarioError::InvalidNode { node: n.id, reason: e.to_string() })?;
        nodes.push(NodeConfig {
            id: NodeId(n.id),
            position,
            energy,
            role: n.role,
            fixed_backlog_offset: n.backlog_offset,
        });
    }
    let position_of = |id: u16| nodes.iter().find(|n| n.id == NodeId(id)).map(|n| n.position);

    let mut sessions = Vec::with_capacity(doc.sessions.len());
    let mut destinations = BTreeMap::new();
    for (i, s) in doc.sessions.iter().enumerate() {
        let bad = |reason: &str| ScenarioError::InvalidSession { index: i, reason: reason.to_string() };
        for node in [s.src, s.dst] {
            if !ids.contains(&node) {
                return Err(ScenarioError::UnknownSessionEndpoint { session: i, node });
            }
        }
        if s.src == s.dst {
            return Err(bad("src and dst must differ"));
        }
        if !(s.rate_pps.is_finite() && s.rate_pps > 0.0) {
            return Err(bad("rate_pps must be positive"));
        }
        if s.payload_bytes == 0 {
            return Err(bad("payload_bytes must be positive"));
        }
        let stop_s = s.stop_s.unwrap_or(doc.sim.duration_s);
        if !(s.start_s.is_finite() && stop_s.is_finite() && 0.0 <= s.start_s && s.start_s < stop_s) {
            return Err(bad("need 0 <= start_s < stop_s"));
        }
        let dst_pos = match s.dst_position {
            Some([x, y]) => GeoPosition::new(x, y),
            None => position_of(s.dst).expect("checked above"),
        };
        if !dst_pos.is_finite() {
            return Err(bad("dst_position must be finite"));
        }
        if let Some(prev) = destinations.insert(NodeId(s.dst), dst_pos) {
            if prev != dst_pos {
                return Err(bad("conflicting dst_position for the same destination"));
            }
        }
        sessions.push(Session {
            id: SessionId(i as u32),
            src: NodeId(s.src),
            dst: NodeId(s.dst),
            rate_pps: s.rate_pps,
            payload_bytes: s.payload_bytes,
            start: SimTime::from_secs_f64(s.start_s),
            stop: SimTime::from_secs_f64(stop_s),
        });
    }

    let r = &doc.radio;
    let data_rate = rate(r.data_rate_mbps)?;
    let control_rate = rate(r.control_rate_mbps)?;
    if !(0.0..=1.0).contains(&r.link_model.one_mbps_robustness) {
        return Err(ScenarioError::Invalid("radio.link_model.one_mbps_robustness must lie in [0, 1]".into()));
    }
    let mut rows = BTreeMap::new();
    for (key, points) in &r.link_model.rows {
        let mbps: f64 = key
            .parse()
            .map_err(|_| ScenarioError::Invalid(format!("radio.link_model.rows: {key:?} is not a rate in Mbps")))?;
        rows.insert(rate(mbps)?, points.iter().map(|&[d, p]| CalibrationPoint::new(d, p)).collect());
    }
    let link_model = LinkModel::measured(r.link_model.one_mbps_robustness)
        .with_control_rate(control_rate)
        .with_overrides(rows, Some(r.link_model.cutoff_m.unwrap_or(DEFAULT_CUTOFF_M)))?;
    let beacon_period = positive_secs(r.beacon_period_s, "radio.beacon_period_s")?;
    if !(r.staleness_periods.is_finite() && r.staleness_periods > 0.0) {
        return Err(ScenarioError::NonPositiveDuration("radio.staleness_periods"));
    }
    if !(r.tx_power_w.is_finite() && r.tx_power_w >= 0.0 && r.rx_power_w.is_finite() && r.rx_power_w >= 0.0) {
        return Err(ScenarioError::Invalid("radio power figures must be non-negative".into()));
    }
    let phy = PhyConfig { header_bytes: r.header_bytes, preamble: SimTime::from_micros(r.preamble_us) };
    let radio = RadioConfig {
        data_rate,
        beacon_period,
        staleness: SimTime::from_secs_f64(r.beacon_period_s * r.staleness_periods),
        link_model,
        phy,
        tx_power_w: r.tx_power_w,
        rx_power_w: r.rx_power_w,
    };

    let mac = doc.mac.to_config();
    mac.validate(airtime_for(CTS_BYTES, control_rate, &phy), airtime_for(BLOCK_ACK_BYTES, control_rate, &phy))?;

    let utility = UtilityRegistry::default().get(&doc.routing.utility).map_err(|e| ScenarioError::Routing(e.to_string()))?;
    if !(doc.routing.ewma_alpha > 0.0 && doc.routing.ewma_alpha <= 1.0) {
        return Err(ScenarioError::Routing("ewma_alpha must lie in (0, 1]".into()));
    }
    let routing = RoutingConfig {
        utility_name: doc.routing.utility.clone(),
        utility,
        ewma_alpha: doc.routing.ewma_alpha,
        backlog_scope: doc.routing.backlog_scope,
    };

    if !(doc.traffic.jitter.is_finite() && (0.0..1.0).contains(&doc.traffic.jitter)) {
        return Err(ScenarioError::Invalid("traffic.jitter must lie in [0, 1)".into()));
    }

    let mut world_events = Vec::with_capacity(doc.world_events.len());
    for (i, w) in doc.world_events.iter().enumerate() {
        let bad = |reason: String| ScenarioError::InvalidWorldEvent { index: i, reason };
        let at_s = w.at_s();
        if !(at_s.is_finite() && 0.0 <= at_s && at_s <= doc.sim.duration_s) {
            return Err(bad(format!("at_s {at_s} outside [0, {}]", doc.sim.duration_s)));
        }
        let node = |id: u16| if ids.contains(&id) { Ok(NodeId(id)) } else { Err(bad(format!("unknown node {id}"))) };
        let session = |s: usize| {
            if s < sessions.len() {
                Ok(SessionId(s as u32))
            } else {
                Err(bad(format!("unknown session {s}")))
            }
        };
        let action = match *w {
            WorldEventSpec::SetBacklogOffset { node: n, count, .. } => WorldAction::SetBacklogOffset { node: node(n)?, count },
            WorldEventSpec::SetResidualEnergy { node: n, ratio, .. } => {
                if !(0.0..=1.0).contains(&ratio) {
                    return Err(bad("ratio must lie in [0, 1]".into()));
                }
                WorldAction::SetResidualEnergy { node: node(n)?, ratio }
            }
            WorldEventSpec::MoveNode { node: n, x, y, .. } => {
                let position = GeoPosition::new(x, y);
                if !position.is_finite() {
                    return Err(bad("position must be finite".into()));
                }
                WorldAction::MoveNode { node: node(n)?, position }
            }
            WorldEventSpec::StartSession { session: s, .. } => WorldAction::StartSession(session(s)?),
            WorldEventSpec::StopSession { session: s, .. } => WorldAction::StopSession(session(s)?),
        };
        world_events.push(WorldEvent { at: SimTime::from_secs_f64(at_s), action });
    }

    Ok(ValidatedScenario {
        name: doc.name.clone().unwrap_or_else(|| "scenario".into()),
        nodes,
        sessions,
        destinations,
        radio,
        mac,
        routing,
        jitter: doc.traffic.jitter,
        world_events,
        sim,
    })
}

/// Sets `path` (dotted fields and `[i]` indices, e.g.
/// `sessions[0].payload_bytes`) inside a JSON document. Missing object
/// fields are created; indices must exist.
pub fn set_json_path(doc: &mut Value, path: &str, value: Value) -> Result<(), ScenarioError> {
    let bad = |why: String| ScenarioError::Invalid(format!("parameter path {path:?}: {why}"));
    let mut steps = Vec::new();
    for part in path.split('.') {
        let (name, mut rest) = match part.find('[') {
            Some(i) => (&part[..i], &part[i..]),
            None => (part, ""),
        };
        if name.is_empty() && rest.is_empty() {
            return Err(bad("empty segment".into()));
        }
        if !name.is_empty() {
            steps.push(Err(name.to_string()));
        }
        while let Some(r) = rest.strip_prefix('[') {
            let end = r.find(']').ok_or_else(|| bad("unclosed '['".into()))?;
            let idx: usize = r[..end].parse().map_err(|_| bad(format!("bad index {:?}", &r[..end])))?;
            steps.push(Ok(idx));
            rest = &r[end + 1..];
        }
        if !rest.is_empty() {
            return Err(bad(format!("unexpected {rest:?}")));
        }
    }
    let (last, init) = steps.split_last().ok_or_else(|| bad("empty path".into()))?;
    let mut cur = doc;
    for step in init {
        cur = match step {
            Err(name) => {
                let obj = cur.as_object_mut().ok_or_else(|| bad(format!("{name} is not inside an object")))?;
                obj.entry(name.clone()).or_insert_with(|| Value::Object(Default::default()))
            }
            Ok(i) => cur
                .as_array_mut()
                .and_then(|a| a.get_mut(*i))
                .ok_or_else(|| bad(format!("index {i} out of range")))?,
        };
    }
    match last {
        Err(name) => {
            cur.as_object_mut().ok_or_else(|| bad(format!("{name} is not inside an object")))?.insert(name.clone(), value);
        }
        Ok(i) => {
            *cur.as_array_mut()
                .and_then(|a| a.get_mut(*i))
                .ok_or_else(|| bad(format!("index {i} out of range")))? = value;
        }
    }
    Ok(())
}
