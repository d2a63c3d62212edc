//! Discrete-event kernel: N protocol stacks over one shared medium.
//!
//! Events are dispatched in `(time, seq)` order from a single queue and all
//! randomness comes from one ChaCha stream seeded once, so a run is a pure
//! function of `(scenario, seed)`. Each node owns its queues, sender and
//! receiver MAC state and neighbor table; nodes interact only through
//! frames on the [`Medium`].

mod trace;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mac::rx::LocalView;
use crate::mac::{
    mac_step, on_control_frame, MacAction, MacEvent, MacFrame, MacPhase, MacState, QueuePair, RxAction, RxState,
    TimerKind,
};
use crate::metrics::{summarize, MetricsReport};
use crate::model::{EnergyState, GeoPosition, NodeId, Packet, Segment, SessionId};
use crate::phy::{
    airtime_for, frame_airtime, resolve_reception, Destination, Frame, FrameKind, FramePayload, Medium,
    LossReason, ReceptionOutcome, ScheduledReception, Transmission, BEACON_BYTES, BLOCK_ACK_BYTES, CTS_BYTES, RTS_BYTES,
};
use crate::routing::{
    assign_routes, build_beacon, evict_stale, ingest_beacon, update_link_quality, NeighborTable, SelfState,
};
use crate::scenario::{BacklogScope, ValidatedScenario, WorldAction};
use crate::time::SimTime;

pub use trace::{digest_lines, DropReason, Outcome, PacketFate, TraceEvent, TraceWriter};

/// Per-node counters collected during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStats {
    pub id: NodeId,
    /// Packets taken into custody as a relay (not as final destination).
    pub forwarded: u64,
    pub data_frames: u64,
    pub control_frames: u64,
    pub beacons: u64,
    pub residual_j: f64,
    pub energy_ratio: f64,
}

/// Everything a run leaves behind for metrics and determinism checks.
#[derive(Debug, Clone)]
pub struct EventTrace {
    /// FNV-1a 64 over the NDJSON trace.
    pub digest: u64,
    pub record_count: u64,
    /// The NDJSON lines, when recording was requested.
    pub lines: Option<Vec<String>>,
    /// Per session, indexed by packet sequence number.
    pub packets: Vec<Vec<PacketFate>>,
    pub nodes: Vec<NodeStats>,
    /// Packets still held somewhere at the end, counted from the queues
    /// themselves rather than from the fates.
    pub held_at_end: u64,
    /// Sum of all frame airtimes.
    pub airtime: SimTime,
    pub data_airtime: SimTime,
    pub end: SimTime,
    pub events: u64,
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub trace: EventTrace,
}

/// Runs `scenario` to its configured duration.
pub fn run(scenario: &ValidatedScenario, seed: u64) -> RunOutput {
    let trace = Engine::new(scenario, seed).run();
    let report = summarize(&trace, scenario);
    RunOutput { report, trace }
}

#[derive(Debug, Clone)]
enum Outgoing {
    Mac(MacFrame),
    Cts { to: NodeId, token: u64, burst: SimTime, exchange_end: SimTime },
    BlockAck { to: NodeId, token: u64, bitmap: Vec<bool> },
    Beacon,
}

#[derive(Debug, Clone)]
enum EventKind {
    TrafficGen(usize),
    BeaconTick { node: usize, periodic: bool },
    MacTimer { node: usize, kind: TimerKind, token: u64 },
    StartTx { node: usize, out: Outgoing },
    Reception(ScheduledReception),
    TxEnd { node: usize, tx_id: u64, kind: FrameKind },
    SendBlockAck { node: usize, from: NodeId, token: u64 },
    NavExpire(usize),
    World(usize),
    MetricsTick,
}

#[derive(Debug)]
struct Event {
    time: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

struct NodeRt {
    id: NodeId,
    position: GeoPosition,
    energy: EnergyState,
    backlog_offset: u64,
    queues: QueuePair,
    mac: MacState,
    rx: RxState,
    table: NeighborTable,
    next_token: u64,
    exchange_end: SimTime,
    tx_until: SimTime,
    /// Contention holds off until here after an undecodable frame.
    eifs_until: SimTime,
    depleted: bool,
    beacon_pending: bool,
    beacon_retry_armed: bool,
    stats: NodeStats,
}

struct SessionRt {
    active: bool,
    running: bool,
    next_seq: u64,
}

struct Engine<'a> {
    sc: &'a ValidatedScenario,
    now: SimTime,
    seq: u64,
    events: BinaryHeap<Event>,
    rng: ChaCha8Rng,
    medium: Medium,
    nodes: Vec<NodeRt>,
    index: BTreeMap<NodeId, usize>,
    sessions: Vec<SessionRt>,
    fates: Vec<Vec<PacketFate>>,
    trace: TraceWriter,
    airtime: SimTime,
    data_airtime: SimTime,
    dispatched: u64,
}

impl<'a> Engine<'a> {
    fn new(sc: &'a ValidatedScenario, seed: u64) -> Self {
        let nodes: Vec<NodeRt> = sc
            .nodes
            .iter()
            .map(|n| NodeRt {
                id: n.id,
                position: n.position,
                energy: n.energy,
                backlog_offset: n.fixed_backlog_offset,
                queues: QueuePair::new(sc.mac.queue_capacity),
                mac: MacState::new(&sc.mac),
                rx: RxState::new(),
                table: NeighborTable::new(sc.radio.staleness),
                next_token: 0,
                exchange_end: SimTime::ZERO,
                tx_until: SimTime::ZERO,
                eifs_until: SimTime::ZERO,
                depleted: n.energy.is_depleted(),
                beacon_pending: false,
                beacon_retry_armed: false,
                stats: NodeStats {
                    id: n.id,
                    forwarded: 0,
                    data_frames: 0,
                    control_frames: 0,
                    beacons: 0,
                    residual_j: n.energy.residual_j(),
                    energy_ratio: n.energy.ratio(),
                },
            })
            .collect();
        let index = nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        Engine {
            sc,
            now: SimTime::ZERO,
            seq: 0,
            events: BinaryHeap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            medium: Medium::new(sc.nodes.iter().map(|n| (n.id, n.position)), sc.radio.link_model.cutoff_distance()),
            nodes,
            index,
            sessions: sc.sessions.iter().map(|_| SessionRt { active: true, running: false, next_seq: 0 }).collect(),
            fates: vec![Vec::new(); sc.sessions.len()],
            trace: TraceWriter::new(sc.sim.record_trace),
            airtime: SimTime::ZERO,
            data_airtime: SimTime::ZERO,
            dispatched: 0,
        }
    }

    fn schedule(&mut self, time: SimTime, kind: EventKind) {
        debug_assert!(time >= self.now, "event scheduled in the past");
        self.seq += 1;
        self.events.push(Event { time, seq: self.seq, kind });
    }

    fn record(&mut self, node: Option<usize>, ev: TraceEvent) {
        let id = node.map(|i| self.nodes[i].id);
        self.trace.record(self.now, id, ev);
    }

    fn run(mut self) -> EventTrace {
        for (i, s) in self.sc.sessions.iter().enumerate() {
            self.sessions[i].running = true;
            self.schedule(s.start, EventKind::TrafficGen(i));
        }
        let period = self.sc.radio.beacon_period;
        for i in 0..self.nodes.len() {
            let offset = SimTime(self.rng.gen_range(0..period.as_nanos().max(1)));
            self.schedule(offset, EventKind::BeaconTick { node: i, periodic: true });
        }
        for (i, w) in self.sc.world_events.iter().enumerate() {
            self.schedule(w.at, EventKind::World(i));
        }
        self.schedule(self.sc.sim.metrics_tick, EventKind::MetricsTick);

        let end = self.sc.sim.duration;
        while let Some(ev) = self.events.pop() {
            if ev.time > end {
                break;
            }
            debug_assert!(ev.time >= self.now);
            self.now = ev.time;
            self.dispatched += 1;
            self.dispatch(ev.kind);
        }
        self.now = end;
        self.finish()
    }

    fn finish(self) -> EventTrace {
        let mut held = 0u64;
        for n in &self.nodes {
            held += n.queues.len() as u64;
            if let Some(seg) = &n.mac.current_segment {
                let truth = self.truth_bitmap(n.id, seg);
                held += truth.iter().filter(|&&d| !d).count() as u64;
            }
        }
        let nodes = self
            .nodes
            .iter()
            .map(|n| NodeStats { residual_j: n.energy.residual_j(), energy_ratio: n.energy.ratio(), ..n.stats.clone() })
            .collect();
        EventTrace {
            digest: self.trace.digest(),
            record_count: self.trace.count(),
            packets: self.fates,
            nodes,
            held_at_end: held,
            airtime: self.airtime,
            data_airtime: self.data_airtime,
            end: self.now,
            events: self.dispatched,
            lines: self.trace.into_lines(),
        }
    }

    fn dispatch(&mut self, kind: EventKind) {
        match kind {
            EventKind::TrafficGen(s) => self.generate_traffic(s),
            EventKind::BeaconTick { node, periodic } => self.beacon_tick(node, periodic),
            EventKind::MacTimer { node, kind, token } => {
                self.record(Some(node), TraceEvent::Timeout { timer: timer_name(kind) });
                self.mac_event(node, MacEvent::Timeout { kind, token });
            }
            EventKind::StartTx { node, out } => self.start_tx(node, out),
            EventKind::Reception(s) => self.reception(s),
            EventKind::TxEnd { node, tx_id, kind } => self.tx_end(node, tx_id, kind),
            EventKind::SendBlockAck { node, from, token } => {
                if let Some(bitmap) = self.nodes[node].rx.take_block_ack(from, token) {
                    if self.sc.mac.arq_enabled {
                        self.start_tx(node, Outgoing::BlockAck { to: from, token, bitmap });
                    }
                }
            }
            EventKind::NavExpire(node) => {
                if !self.nodes[node].rx.nav_busy(self.now) {
                    self.kick(node);
                }
            }
            EventKind::World(i) => self.world_event(i),
            EventKind::MetricsTick => {
                let queued = self.nodes.iter().map(|n| n.queues.len() as u64).sum();
                self.record(None, TraceEvent::Tick { queued });
                let next = self.now + self.sc.sim.metrics_tick;
                self.schedule(next, EventKind::MetricsTick);
            }
        }
    }

    /// Emits one CBR packet for session `s` and schedules the next.
    fn generate_traffic(&mut self, s: usize) {
        let sess = &self.sc.sessions[s];
        let rt = &mut self.sessions[s];
        if !rt.active || self.now >= sess.stop {
            rt.running = false;
            return;
        }
        let seq = rt.next_seq;
        rt.next_seq += 1;
        let packet = Packet {
            session: sess.id,
            seq,
            src: sess.src,
            dst: sess.dst,
            payload_len: sess.payload_bytes,
            created_at: self.now,
            assigned_next_hop: None,
        };
        self.fates[s].push(PacketFate { created_at: self.now, payload_bytes: sess.payload_bytes, outcome: Outcome::Pending });
        let src = self.index[&sess.src];
        self.record(Some(src), TraceEvent::Gen { session: sess.id.0, seq });
        if self.nodes[src].queues.enqueue_outbound(packet).is_err() {
            self.drop_packet(sess.id, seq, DropReason::QueueOverflow);
        } else {
            self.feed(src);
        }

        let interval = (1e9 / sess.rate_pps).round();
        let u: f64 = if self.sc.jitter > 0.0 { self.rng.gen_range(-1.0..1.0) } else { 0.0 };
        let gap = (interval * (1.0 + self.sc.jitter * u)).round().max(1.0) as u64;
        self.schedule(self.now + SimTime(gap), EventKind::TrafficGen(s));
    }

    fn drop_packet(&mut self, session: SessionId, seq: u64, reason: DropReason) {
        let fate = &mut self.fates[session.0 as usize][seq as usize];
        debug_assert_eq!(fate.outcome, Outcome::Pending);
        fate.outcome = Outcome::Dropped { at: self.now, reason };
        self.record(None, TraceEvent::Drop { session: session.0, seq, reason });
    }

    fn backlog(&self, node: usize) -> u64 {
        let n = &self.nodes[node];
        let held = match self.sc.routing.backlog_scope {
            BacklogScope::All => n.queues.len() + n.mac.current_segment.as_ref().map_or(0, Segment::len),
            BacklogScope::General => n.queues.general_len(),
        };
        held as u64 + n.backlog_offset
    }

    fn self_state(&self, node: usize) -> SelfState {
        let n = &self.nodes[node];
        SelfState { id: n.id, position: n.position, energy: n.energy, backlog: self.backlog(node) }
    }

    fn beacon_tick(&mut self, node: usize, periodic: bool) {
        if periodic {
            let next = self.now + self.sc.radio.beacon_period;
            self.schedule(next, EventKind::BeaconTick { node, periodic: true });
            self.nodes[node].beacon_pending = true;
        } else {
            self.nodes[node].beacon_retry_armed = false;
        }
        let n = &self.nodes[node];
        if !n.beacon_pending || n.depleted {
            return;
        }
        let grant_open = n.rx.grant().is_some_and(|g| self.now < g.exchange_end);
        if !n.mac.in_exchange() && !grant_open && self.channel_idle(node) {
            self.nodes[node].beacon_pending = false;
            self.start_tx(node, Outgoing::Beacon);
        } else if !n.beacon_retry_armed {
            let m = &self.sc.mac;
            let slots = self.rng.gen_range(0..m.cw_min) as u64;
            let after = m.difs + SimTime(m.slot_time.as_nanos() * slots);
            self.nodes[node].beacon_retry_armed = true;
            self.schedule(self.now + after, EventKind::BeaconTick { node, periodic: false });
        }
    }

    fn channel_idle(&self, node: usize) -> bool {
        let n = &self.nodes[node];
        !self.medium.is_busy_for(n.id, self.now)
            && !(self.sc.mac.virtual_carrier_sense && n.rx.nav_busy(self.now))
            && self.now >= n.eifs_until
    }

    /// Hands the MAC its next segment when it is idle.
    fn feed(&mut self, node: usize) {
        if self.nodes[node].depleted || self.nodes[node].mac.phase != MacPhase::Idle {
            return;
        }
        let seg_size = self.sc.mac.segment_size;
        let segment = match self.nodes[node].queues.pop_transmit() {
            Some(s) => s,
            None => {
                if self.nodes[node].queues.routed_len() == 0 {
                    let me = self.self_state(node);
                    let dests = &self.sc.destinations;
                    let now = self.now;
                    let n = &mut self.nodes[node];
                    evict_stale(&mut n.table, now);
                    assign_routes(self.sc.routing.utility, &me, &mut n.queues, &n.table, |d| dests.get(&d).copied(), seg_size);
                }
                let n = &mut self.nodes[node];
                let Some(hop) = n.queues.oldest_routed_hop() else { return };
                let token = n.next_token;
                n.next_token += 1;
                n.queues.form_segment(hop, seg_size, token).expect("oldest routed hop has packets")
            }
        };
        self.mac_event(node, MacEvent::SegmentReady(segment));
    }

    /// Tells a sensing MAC that the medium is free.
    fn kick(&mut self, node: usize) {
        if self.nodes[node].mac.phase == MacPhase::Sensing && !self.nodes[node].depleted && self.channel_idle(node) {
            self.mac_event(node, MacEvent::ChannelIdle);
        }
    }

    fn mac_event(&mut self, node: usize, event: MacEvent) {
        let actions = mac_step(&mut self.nodes[node].mac, event, &self.sc.mac, &mut self.rng, self.now)
            .expect("engine only issues legal MAC events");
        for a in actions {
            match a {
                MacAction::Transmit { frame, delay } => {
                    self.schedule(self.now + delay, EventKind::StartTx { node, out: Outgoing::Mac(frame) })
                }
                MacAction::StartTimer { kind, after, token } => {
                    self.schedule(self.now + after, EventKind::MacTimer { node, kind, token })
                }
                MacAction::ReturnSegmentToGeneral { segment, .. } => self.settle_segment(node, segment, None),
                MacAction::CompleteSegment { segment, .. } => {
                    self.settle_segment(node, segment, Some(DropReason::ChannelLoss))
                }
                MacAction::DropSegment { segment, .. } => self.settle_segment(node, segment, Some(DropReason::RetryLimit)),
                MacAction::LinkOutcome { peer, success } => {
                    if let Some(r) = self.nodes[node].table.get_mut(peer) {
                        update_link_quality(r, success, self.sc.routing.ewma_alpha);
                    }
                }
            }
        }
        match self.nodes[node].mac.phase {
            MacPhase::Idle => self.feed(node),
            MacPhase::Sensing => self.kick(node),
            _ => {}
        }
    }

    /// The next hop's receive log, which is authoritative for custody.
    fn truth_bitmap(&self, me: NodeId, segment: &Segment) -> Vec<bool> {
        let hop = &self.nodes[self.index[&segment.next_hop()]];
        match hop.rx.received_bitmap(me, segment.token) {
            Some(b) if b.len() == segment.len() => b.to_vec(),
            _ => vec![false; segment.len()],
        }
    }

    /// Closes out a segment the MAC gave up on or finished. Packets the
    /// next hop accepted are already in its custody; the rest are dropped
    /// with `reason`, or returned for rerouting when `reason` is `None`.
    fn settle_segment(&mut self, node: usize, segment: Segment, reason: Option<DropReason>) {
        let truth = self.truth_bitmap(self.nodes[node].id, &segment);
        let mut back = Vec::new();
        for (p, got) in segment.into_packets().into_iter().zip(truth) {
            if got {
                continue;
            }
            match reason {
                Some(r) => self.drop_packet(p.session, p.seq, r),
                None => back.push(p),
            }
        }
        if !back.is_empty() {
            self.nodes[node].queues.return_to_general(back);
        }
    }

    fn build_frame(&mut self, node: usize, out: Outgoing) -> Option<Frame> {
        let sc = self.sc;
        let control = sc.radio.link_model.control_rate();
        let phy = &sc.radio.phy;
        let n = &mut self.nodes[node];
        let unicast = |to: NodeId, size: u32, nav, payload| Frame {
            src: n.id,
            dst: Destination::Unicast(to),
            size_bytes: size,
            rate: control,
            nav_until: nav,
            payload,
        };
        Some(match out {
            Outgoing::Mac(MacFrame::Rts { to, token, indices }) => {
                let seg = n.mac.current_segment.as_ref()?;
                let gap = sc.mac.data_frame_gap;
                let mut burst = SimTime::ZERO;
                for (k, &i) in indices.iter().enumerate() {
                    if k > 0 {
                        burst += gap;
                    }
                    let p = &seg.packets()[i as usize];
                    burst += airtime_for(p.payload_len + phy.header_bytes, sc.radio.data_rate, phy);
                }
                let sifs = sc.mac.sifs;
                let rts_end = self.now + airtime_for(RTS_BYTES, control, phy);
                let cts_end = rts_end + sifs + airtime_for(CTS_BYTES, control, phy);
                let mut exchange_end = cts_end + sifs + burst;
                if sc.mac.arq_enabled {
                    exchange_end += sifs + airtime_for(BLOCK_ACK_BYTES, control, phy);
                }
                n.exchange_end = exchange_end;
                let provisional = cts_end + SimTime(2 * sc.mac.slot_time.as_nanos());
                unicast(to, RTS_BYTES, Some(provisional), FramePayload::Rts { token, indices, burst, exchange_end })
            }
            Outgoing::Mac(MacFrame::Data { to, token, index }) => {
                let seg = n.mac.current_segment.as_ref().filter(|s| s.token == token)?;
                let packet = seg.packets()[index as usize].clone();
                let segment_len = seg.len() as u16;
                Frame {
                    src: n.id,
                    dst: Destination::Unicast(to),
                    size_bytes: packet.payload_len,
                    rate: sc.radio.data_rate,
                    nav_until: Some(n.exchange_end),
                    payload: FramePayload::Data { token, index, segment_len, packet },
                }
            }
            Outgoing::Cts { to, token, burst, exchange_end } => {
                unicast(to, CTS_BYTES, Some(exchange_end), FramePayload::Cts { token, burst })
            }
            Outgoing::BlockAck { to, token, bitmap } => {
                unicast(to, BLOCK_ACK_BYTES, None, FramePayload::BlockAck { token, bitmap })
            }
            Outgoing::Beacon => {
                let me = SelfState { id: n.id, position: n.position, energy: n.energy, backlog: 0 };
                let mut beacon = build_beacon(&me, self.now);
                beacon.backlog = self.backlog(node);
                Frame {
                    src: self.nodes[node].id,
                    dst: Destination::Broadcast,
                    size_bytes: BEACON_BYTES,
                    rate: control,
                    nav_until: None,
                    payload: FramePayload::Beacon(beacon),
                }
            }
        })
    }

    fn start_tx(&mut self, node: usize, out: Outgoing) {
        if self.nodes[node].depleted {
            return;
        }
        let id = self.nodes[node].id;
        if self.medium.is_transmitting(id, self.now) {
            // Half duplex: wait for our own frame to finish.
            let at = self.nodes[node].tx_until;
            self.schedule(at, EventKind::StartTx { node, out });
            return;
        }
        let Some(frame) = self.build_frame(node, out) else { return };
        let phy = &self.sc.radio.phy;
        let t = Transmission::new(frame, id, self.now, phy);
        let air = t.end - t.start;
        let kind = t.frame.kind();
        let dst = match t.frame.dst {
            Destination::Unicast(n) => Some(n.0),
            Destination::Broadcast => None,
        };
        let token = match &t.frame.payload {
            FramePayload::Rts { token, .. }
            | FramePayload::Cts { token, .. }
            | FramePayload::Data { token, .. }
            | FramePayload::BlockAck { token, .. } => Some(*token),
            FramePayload::Beacon(_) => None,
        };
        let bytes = t.frame.size_bytes;
        let end = t.end;

        let n = &mut self.nodes[node];
        n.energy.consume(self.sc.radio.tx_power_w * air.as_secs_f64());
        n.tx_until = end;
        match kind {
            FrameKind::Data => n.stats.data_frames += 1,
            FrameKind::Beacon => n.stats.beacons += 1,
            _ => n.stats.control_frames += 1,
        }
        self.airtime += air;
        if kind == FrameKind::Data {
            self.data_airtime += air;
        }

        let (tx_id, receptions) = self.medium.transmit(t).expect("half duplex checked above");
        self.record(Some(node), TraceEvent::Tx { kind, dst, bytes, token, end: end.as_nanos() });
        for r in receptions {
            self.schedule(r.at, EventKind::Reception(r));
        }
        self.schedule(end, EventKind::TxEnd { node, tx_id, kind });

        if self.nodes[node].energy.is_depleted() && !self.nodes[node].depleted {
            self.nodes[node].depleted = true;
            self.record(Some(node), TraceEvent::Depleted);
        }

        // Carrier sense: everyone in range (and the sender) sees a busy medium.
        let mut hearers = self.medium.neighbors_of(id);
        hearers.push(id);
        for h in hearers {
            let i = self.index[&h];
            if self.nodes[i].mac.phase == MacPhase::Backoff {
                self.mac_event(i, MacEvent::ChannelBusy);
            }
        }
    }

    fn reception(&mut self, s: ScheduledReception) {
        let Some(rec) = self.medium.take_reception(s) else { return };
        let node = self.index[&rec.receiver];
        if self.sc.radio.rx_power_w > 0.0 {
            let air = frame_airtime(&rec.frame, &self.sc.radio.phy);
            self.nodes[node].energy.consume(self.sc.radio.rx_power_w * air.as_secs_f64());
            if self.nodes[node].energy.is_depleted() && !self.nodes[node].depleted {
                self.nodes[node].depleted = true;
                self.record(Some(node), TraceEvent::Depleted);
            }
        }
        let outcome = resolve_reception(&self.sc.radio.link_model, &rec, &mut self.rng)
            .expect("every configured rate has a calibration row");
        let loss = match outcome {
            ReceptionOutcome::Delivered => None,
            ReceptionOutcome::Lost(r) => Some(r),
        };
        self.record(Some(node), TraceEvent::Rx { from: rec.tx.0, kind: rec.frame.kind(), loss });
        if let Some(reason) = loss {
            if self.sc.mac.eifs && reason != LossReason::Deaf {
                self.defer_eifs(node);
            }
            return;
        }
        let n = &self.nodes[node];
        let view = LocalView {
            me: n.id,
            phase: n.mac.phase,
            transmitting: self.medium.is_transmitting(n.id, self.now),
            in_flight: n.mac.current_segment.as_ref().map(|s| (s.next_hop(), s.token)),
            virtual_carrier_sense: self.sc.mac.virtual_carrier_sense,
            sifs: self.sc.mac.sifs,
        };
        let actions = on_control_frame(&mut self.nodes[node].rx, view, &rec.frame, self.now);
        for a in actions {
            match a {
                RxAction::SendCts { to, token, burst, exchange_end, delay } => self.schedule(
                    self.now + delay,
                    EventKind::StartTx { node, out: Outgoing::Cts { to, token, burst, exchange_end } },
                ),
                RxAction::Accept { from, packet } => self.take_custody(node, from, packet),
                RxAction::Mac(ev) => self.mac_event(node, ev),
                RxAction::SetNav(until) => {
                    self.schedule(until, EventKind::NavExpire(node));
                    if self.nodes[node].mac.phase == MacPhase::Backoff {
                        self.mac_event(node, MacEvent::ChannelBusy);
                    }
                }
                RxAction::Beacon(b) => {
                    ingest_beacon(&mut self.nodes[node].table, &b, self.now, self.sc.routing.ewma_alpha);
                    self.feed(node);
                }
            }
        }
    }

    fn defer_eifs(&mut self, node: usize) {
        let radio = &self.sc.radio;
        let until = self.now
            + self.sc.mac.sifs
            + airtime_for(BLOCK_ACK_BYTES, radio.link_model.control_rate(), &radio.phy);
        if until <= self.nodes[node].eifs_until {
            return;
        }
        self.nodes[node].eifs_until = until;
        self.schedule(until, EventKind::NavExpire(node));
        if self.nodes[node].mac.phase == MacPhase::Backoff {
            self.mac_event(node, MacEvent::ChannelBusy);
        }
    }

    fn take_custody(&mut self, node: usize, from: NodeId, packet: Packet) {
        let (session, seq) = (packet.session, packet.seq);
        if packet.dst == self.nodes[node].id {
            let fate = &mut self.fates[session.0 as usize][seq as usize];
            debug_assert_eq!(fate.outcome, Outcome::Pending, "packet delivered twice");
            if fate.outcome == Outcome::Pending {
                fate.outcome = Outcome::Delivered { at: self.now, last_hop: from };
            }
            self.record(Some(node), TraceEvent::Deliver { from: from.0, session: session.0, seq });
            return;
        }
        self.nodes[node].stats.forwarded += 1;
        self.record(Some(node), TraceEvent::Accept { from: from.0, session: session.0, seq });
        if self.nodes[node].queues.enqueue_outbound(packet).is_err() {
            self.drop_packet(session, seq, DropReason::QueueOverflow);
        } else {
            self.feed(node);
        }
    }

    fn tx_end(&mut self, node: usize, tx_id: u64, kind: FrameKind) {
        self.medium.end_transmission(tx_id);
        match kind {
            FrameKind::Rts | FrameKind::Data => self.mac_event(node, MacEvent::TxComplete),
            FrameKind::Cts => {
                let sifs = self.sc.mac.sifs;
                let rx = &mut self.nodes[node].rx;
                if let Some(at) = rx.cts_sent(self.now, sifs) {
                    let g = rx.grant().expect("grant just stamped");
                    let (from, token) = (g.from, g.token);
                    self.schedule(at, EventKind::SendBlockAck { node, from, token });
                }
            }
            FrameKind::BlockAck | FrameKind::Beacon => {}
        }
        let id = self.nodes[node].id;
        let mut hearers = self.medium.neighbors_of(id);
        hearers.push(id);
        for h in hearers {
            let i = self.index[&h];
            self.kick(i);
            if self.nodes[i].beacon_pending && !self.nodes[i].beacon_retry_armed {
                self.beacon_tick(i, false);
            }
        }
    }

    fn world_event(&mut self, i: usize) {
        let w = self.sc.world_events[i];
        let action = match w.action {
            WorldAction::SetBacklogOffset { node, count } => {
                let n = self.index[&node];
                self.nodes[n].backlog_offset = count;
                format!("set_backlog_offset {} {count}", node.0)
            }
            WorldAction::SetResidualEnergy { node, ratio } => {
                let n = self.index[&node];
                self.nodes[n].energy.set_ratio(ratio);
                self.nodes[n].depleted = self.nodes[n].energy.is_depleted();
                format!("set_residual_energy {} {ratio}", node.0)
            }
            WorldAction::MoveNode { node, position } => {
                let n = self.index[&node];
                self.nodes[n].position = position;
                self.medium.set_position(node, position);
                format!("move_node {} {} {}", node.0, position.x, position.y)
            }
            WorldAction::StartSession(s) => {
                let idx = s.0 as usize;
                self.sessions[idx].active = true;
                if !self.sessions[idx].running {
                    self.sessions[idx].running = true;
                    let at = self.now.max(self.sc.sessions[idx].start);
                    self.schedule(at, EventKind::TrafficGen(idx));
                }
                format!("start_session {}", s.0)
            }
            WorldAction::StopSession(s) => {
                self.sessions[s.0 as usize].active = false;
                format!("stop_session {}", s.0)
            }
        };
        self.record(None, TraceEvent::World { action });
        for n in 0..self.nodes.len() {
            self.feed(n);
        }
    }
}

fn timer_name(kind: TimerKind) -> &'static str {
    match kind {
        TimerKind::Backoff => "backoff",
        TimerKind::CtsTimeout => "cts_timeout",
        TimerKind::AckTimeout => "ack_timeout",
        TimerKind::DataStall => "data_stall",
    }
}
