//! CSMA/CA channel access with an RTS/CTS handshake, segment bursts and
//! block-ACK selective-repeat ARQ.
//!
//! The sender side is a pure transition function, [`mac_step`], driven by
//! the event loop. It never touches the medium or the clock directly: it
//! returns [`MacAction`]s that the caller turns into frames and timers.
//! The receiver side lives in [`rx`].

mod queues;
pub mod rx;

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{NodeId, Segment};
use crate::time::SimTime;

pub use queues::{QueueError, QueuePair};
pub use rx::{on_control_frame, RxAction, RxGrant, RxState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacConfig {
    pub slot_time: SimTime,
    pub sifs: SimTime,
    pub difs: SimTime,
    /// Idle gap between consecutive DATA frames of one burst (host-to-radio
    /// handoff per frame).
    pub data_frame_gap: SimTime,
    pub cw_min: u32,
    pub cw_max: u32,
    /// Measured from the end of the RTS.
    pub cts_timeout: SimTime,
    /// Measured from the end of the last DATA frame.
    pub ack_timeout: SimTime,
    pub max_rts_retries: u32,
    pub max_data_retries: u32,
    pub arq_enabled: bool,
    pub segment_size: usize,
    pub queue_capacity: usize,
    pub virtual_carrier_sense: bool,
    /// After a frame that was heard but not decoded, contention waits an
    /// extra SIFS plus one block-ACK airtime (802.11 EIFS).
    pub eifs: bool,
}

impl Default for MacConfig {
    fn default() -> Self {
        MacConfig {
            slot_time: SimTime::from_micros(20),
            sifs: SimTime::from_micros(10),
            difs: SimTime::from_micros(50),
            data_frame_gap: SimTime::from_micros(280),
            cw_min: 16,
            cw_max: 1024,
            cts_timeout: SimTime::from_micros(600),
            ack_timeout: SimTime::from_micros(800),
            max_rts_retries: 4,
            max_data_retries: 7,
            arq_enabled: true,
            segment_size: 32,
            queue_capacity: 2000,
            virtual_carrier_sense: true,
            eifs: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MacConfigError {
    #[error("contention window bounds invalid: cw_min {cw_min}, cw_max {cw_max}")]
    ContentionWindow { cw_min: u32, cw_max: u32 },
    #[error("{name} ({value}) must exceed {needed}")]
    TimeoutTooShort { name: &'static str, value: SimTime, needed: SimTime },
    #[error("segment size must be in 1..=65535")]
    SegmentSize,
    #[error("queue capacity must be positive")]
    QueueCapacity,
    #[error("slot time must be positive")]
    SlotTime,
}

impl MacConfig {
    /// Checks internal consistency. `cts_airtime` and `ack_airtime` are the
    /// control-frame airtimes the timeouts must cover.
    pub fn validate(&self, cts_airtime: SimTime, ack_airtime: SimTime) -> Result<(), MacConfigError> {
        if self.cw_min == 0 || self.cw_min > self.cw_max {
            return Err(MacConfigError::ContentionWindow { cw_min: self.cw_min, cw_max: self.cw_max });
        }
        if self.slot_time == SimTime::ZERO {
            return Err(MacConfigError::SlotTime);
        }
        if self.segment_size == 0 || self.segment_size > u16::MAX as usize {
            return Err(MacConfigError::SegmentSize);
        }
        if self.queue_capacity == 0 {
            return Err(MacConfigError::QueueCapacity);
        }
        let needed = self.sifs + cts_airtime;
        if self.cts_timeout <= needed {
            return Err(MacConfigError::TimeoutTooShort { name: "cts_timeout", value: self.cts_timeout, needed });
        }
        let needed = self.sifs + ack_airtime;
        if self.ack_timeout <= needed {
            return Err(MacConfigError::TimeoutTooShort { name: "ack_timeout", value: self.ack_timeout, needed });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacPhase {
    Idle,
    Sensing,
    Backoff,
    AwaitCts,
    TxData,
    AwaitAck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimerKind {
    Backoff,
    CtsTimeout,
    AckTimeout,
    DataStall,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MacEvent {
    SegmentReady(Segment),
    ChannelIdle,
    ChannelBusy,
    CtsReceived,
    /// Delivered flags, one per packet of the current segment.
    BlockAckReceived(Vec<bool>),
    /// The frame this node was sending has left the antenna.
    TxComplete,
    Timeout { kind: TimerKind, token: u64 },
}

/// Frames the sender originates. CTS and BLOCK_ACK come from [`rx`].
#[derive(Debug, Clone, PartialEq)]
pub enum MacFrame {
    Rts { to: NodeId, token: u64, indices: Vec<u16> },
    Data { to: NodeId, token: u64, index: u16 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MacAction {
    /// Key up after `delay`.
    Transmit { frame: MacFrame, delay: SimTime },
    StartTimer { kind: TimerKind, after: SimTime, token: u64 },
    /// Next hop unresponsive; `delivered` flags packets already acknowledged.
    ReturnSegmentToGeneral { segment: Segment, delivered: Vec<bool> },
    /// Done with the segment. Unacknowledged packets are losses.
    CompleteSegment { segment: Segment, delivered: Vec<bool> },
    /// Data retry budget exhausted with packets still missing.
    DropSegment { segment: Segment, delivered: Vec<bool> },
    /// Observed handshake outcome toward `peer`, for link-quality estimation.
    LinkOutcome { peer: NodeId, success: bool },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MacError {
    #[error("illegal MAC transition: {event} in phase {phase:?}")]
    IllegalTransition { phase: MacPhase, event: &'static str },
}

/// Sender-side channel access state for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct MacState {
    pub phase: MacPhase,
    pub backoff_slots_remaining: Option<u32>,
    pub contention_window: u32,
    pub current_segment: Option<Segment>,
    /// Per-packet delivered flags for `current_segment`.
    pub pending_bitmap: Vec<bool>,
    burst: VecDeque<u16>,
    countdown_from: SimTime,
    timer: Option<(TimerKind, u64)>,
    next_timer_token: u64,
}

impl MacState {
    pub fn new(config: &MacConfig) -> Self {
        MacState {
            phase: MacPhase::Idle,
            backoff_slots_remaining: None,
            contention_window: config.cw_min,
            current_segment: None,
            pending_bitmap: Vec::new(),
            burst: VecDeque::new(),
            countdown_from: SimTime::ZERO,
            timer: None,
            next_timer_token: 0,
        }
    }

    /// True while this node is mid-exchange and must not answer an RTS.
    pub fn in_exchange(&self) -> bool {
        matches!(self.phase, MacPhase::AwaitCts | MacPhase::TxData | MacPhase::AwaitAck)
    }

    pub fn active_timer(&self) -> Option<(TimerKind, u64)> {
        self.timer
    }

    /// Indices of packets not yet acknowledged.
    pub fn missing(&self) -> Vec<u16> {
        self.pending_bitmap
            .iter()
            .enumerate()
            .filter(|(_, &d)| !d)
            .map(|(i, _)| i as u16)
            .collect()
    }

    fn start_timer(&mut self, kind: TimerKind, after: SimTime) -> MacAction {
        let token = self.next_timer_token;
        self.next_timer_token += 1;
        self.timer = Some((kind, token));
        MacAction::StartTimer { kind, after, token }
    }

    fn cancel_timer(&mut self) {
        self.timer = None;
    }

    fn next_hop(&self) -> NodeId {
        self.current_segment.as_ref().expect("segment in flight").next_hop()
    }

    fn token(&self) -> u64 {
        self.current_segment.as_ref().expect("segment in flight").token
    }

    fn finish(&mut self, config: &MacConfig) -> (Segment, Vec<bool>) {
        let seg = self.current_segment.take().expect("segment in flight");
        let delivered = std::mem::take(&mut self.pending_bitmap);
        self.phase = MacPhase::Idle;
        self.contention_window = config.cw_min;
        self.backoff_slots_remaining = None;
        self.burst.clear();
        self.cancel_timer();
        (seg, delivered)
    }

    fn recontend(&mut self) {
        self.phase = MacPhase::Sensing;
        self.backoff_slots_remaining = None;
        self.burst.clear();
        self.cancel_timer();
    }
}

/// Uniform backoff draw over `[0, contention_window)` slots.
pub fn draw_backoff<R: Rng + ?Sized>(contention_window: u32, rng: &mut R) -> u32 {
    rng.gen_range(0..contention_window)
}

/// Advances the sender state machine by one event.
///
/// Late control frames and carrier-sense changes in phases that do not care
/// about them are ignored. Events that cannot happen with a correct event
/// loop (a second segment while busy, a `TxComplete` with nothing on air)
/// are reported as [`MacError::IllegalTransition`].
pub fn mac_step<R: Rng + ?Sized>(
    state: &mut MacState,
    event: MacEvent,
    config: &MacConfig,
    rng: &mut R,
    now: SimTime,
) -> Result<Vec<MacAction>, MacError> {
    use MacPhase::*;
    let illegal = |phase, event| Err(MacError::IllegalTransition { phase, event });
    match event {
        MacEvent::SegmentReady(segment) => {
            if state.phase != Idle {
                return illegal(state.phase, "SegmentReady");
            }
            state.pending_bitmap = vec![false; segment.len()];
            state.current_segment = Some(segment);
            state.backoff_slots_remaining = None;
            state.phase = Sensing;
            Ok(vec![])
        }
        MacEvent::ChannelIdle => {
            if state.phase != Sensing {
                return Ok(vec![]);
            }
            let slots = match state.backoff_slots_remaining {
                Some(s) => s,
                None => {
                    let s = draw_backoff(state.contention_window, rng);
                    state.backoff_slots_remaining = Some(s);
                    s
                }
            };
            state.phase = Backoff;
            state.countdown_from = now;
            let after = config.difs + SimTime(config.slot_time.0 * slots as u64);
            Ok(vec![state.start_timer(TimerKind::Backoff, after)])
        }
        MacEvent::ChannelBusy => {
            if state.phase != Backoff {
                return Ok(vec![]);
            }
            let slots = state.backoff_slots_remaining.unwrap_or(0) as u64;
            let counting_from = state.countdown_from + config.difs;
            let expiry = counting_from + SimTime(config.slot_time.0 * slots);
            // Busy detected inside the final slot: too late to abort.
            if expiry.saturating_sub(now) < config.slot_time {
                return Ok(vec![]);
            }
            let consumed = if now > counting_from { (now - counting_from).0 / config.slot_time.0 } else { 0 };
            state.backoff_slots_remaining = Some(slots.saturating_sub(consumed) as u32);
            state.phase = Sensing;
            state.cancel_timer();
            Ok(vec![])
        }
        MacEvent::CtsReceived => {
            if state.phase != AwaitCts {
                return Ok(vec![]);
            }
            state.cancel_timer();
            let peer = state.next_hop();
            if let Some(seg) = state.current_segment.as_mut() {
                seg.retries_rts = 0;
            }
            state.burst = state.missing().into();
            state.phase = TxData;
            let index = state.burst.pop_front().expect("a segment round always has a missing packet");
            Ok(vec![
                MacAction::LinkOutcome { peer, success: true },
                MacAction::Transmit { frame: MacFrame::Data { to: peer, token: state.token(), index }, delay: config.sifs },
            ])
        }
        MacEvent::BlockAckReceived(bitmap) => {
            if state.phase != AwaitAck {
                return Ok(vec![]);
            }
            state.cancel_timer();
            for (have, got) in state.pending_bitmap.iter_mut().zip(bitmap) {
                *have |= got;
            }
            Ok(resolve_round(state, config))
        }
        MacEvent::TxComplete => match state.phase {
            AwaitCts => Ok(vec![state.start_timer(TimerKind::CtsTimeout, config.cts_timeout)]),
            TxData => {
                if let Some(index) = state.burst.pop_front() {
                    let frame = MacFrame::Data { to: state.next_hop(), token: state.token(), index };
                    Ok(vec![MacAction::Transmit { frame, delay: config.data_frame_gap }])
                } else {
                    state.phase = AwaitAck;
                    let kind = if config.arq_enabled { TimerKind::AckTimeout } else { TimerKind::DataStall };
                    Ok(vec![state.start_timer(kind, config.ack_timeout)])
                }
            }
            phase => illegal(phase, "TxComplete"),
        },
        MacEvent::Timeout { kind, token } => Ok(on_timeout(state, kind, token, config)),
    }
}

/// Handles an expired timer. Timers superseded by a later transition are
/// ignored.
pub fn on_timeout(state: &mut MacState, kind: TimerKind, token: u64, config: &MacConfig) -> Vec<MacAction> {
    if state.timer != Some((kind, token)) {
        return vec![];
    }
    state.timer = None;
    match kind {
        TimerKind::Backoff => {
            state.backoff_slots_remaining = None;
            state.phase = MacPhase::AwaitCts;
            let to = state.next_hop();
            let frame = MacFrame::Rts { to, token: state.token(), indices: state.missing() };
            vec![MacAction::Transmit { frame, delay: SimTime::ZERO }]
        }
        TimerKind::CtsTimeout => {
            let peer = state.next_hop();
            let mut actions = vec![MacAction::LinkOutcome { peer, success: false }];
            let seg = state.current_segment.as_mut().expect("segment in flight");
            if seg.retries_rts >= config.max_rts_retries {
                let (segment, delivered) = state.finish(config);
                actions.push(MacAction::ReturnSegmentToGeneral { segment, delivered });
            } else {
                seg.retries_rts += 1;
                state.contention_window = (state.contention_window * 2).min(config.cw_max);
                state.recontend();
            }
            actions
        }
        // No acknowledgment: nothing new is known to be delivered.
        TimerKind::AckTimeout | TimerKind::DataStall => resolve_round(state, config),
    }
}

fn resolve_round(state: &mut MacState, config: &MacConfig) -> Vec<MacAction> {
    if state.pending_bitmap.iter().all(|&d| d) || !config.arq_enabled {
        let (segment, delivered) = state.finish(config);
        return vec![MacAction::CompleteSegment { segment, delivered }];
    }
    let seg = state.current_segment.as_mut().expect("segment in flight");
    if seg.retries_data >= config.max_data_retries {
        let (segment, delivered) = state.finish(config);
        return vec![MacAction::DropSegment { segment, delivered }];
    }
    seg.retries_data += 1;
    state.recontend();
    vec![]
}
