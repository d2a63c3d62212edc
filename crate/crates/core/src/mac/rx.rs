//! Receive path: answers RTS with CTS, collects DATA into per-segment
//! bitmaps for the block acknowledgment, forwards CTS/BLOCK_ACK to the
//! local sender state machine and maintains virtual carrier sense.

use std::collections::BTreeMap;

use crate::mac::{MacEvent, MacPhase};
use crate::model::{Beacon, NodeId, Packet};
use crate::phy::{Destination, Frame, FramePayload};
use crate::time::SimTime;

/// A CTS this node granted: `from` may send a `burst` of DATA frames.
#[derive(Debug, Clone, PartialEq)]
pub struct RxGrant {
    pub from: NodeId,
    pub token: u64,
    pub burst: SimTime,
    pub exchange_end: SimTime,
    /// DATA frames of this grant heard so far.
    pub received: usize,
    pub block_ack_at: Option<SimTime>,
}

#[derive(Debug, Clone, PartialEq)]
struct SegmentLog {
    token: u64,
    bitmap: Vec<bool>,
}

/// Receiver-side state for one node.
#[derive(Debug, Clone, Default)]
pub struct RxState {
    pub nav_until: SimTime,
    grant: Option<RxGrant>,
    // Senders hold one segment in flight at a time, so one log per sender.
    logs: BTreeMap<NodeId, SegmentLog>,
}

/// What the local node sees of its own sender side when a frame arrives.
#[derive(Debug, Clone, Copy)]
pub struct LocalView {
    pub me: NodeId,
    pub phase: MacPhase,
    pub transmitting: bool,
    /// `(next hop, segment token)` of the segment in flight, if any.
    pub in_flight: Option<(NodeId, u64)>,
    pub virtual_carrier_sense: bool,
    pub sifs: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RxAction {
    SendCts { to: NodeId, token: u64, burst: SimTime, exchange_end: SimTime, delay: SimTime },
    /// First copy of `packet` received from `from`; custody moves here.
    Accept { from: NodeId, packet: Packet },
    Mac(MacEvent),
    /// Virtual carrier sense extended to this instant.
    SetNav(SimTime),
    Beacon(Beacon),
}

impl RxState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn grant(&self) -> Option<&RxGrant> {
        self.grant.as_ref()
    }

    pub fn nav_busy(&self, now: SimTime) -> bool {
        now < self.nav_until
    }

    /// Delivered flags this node has recorded for `from`'s segment `token`.
    pub fn received_bitmap(&self, from: NodeId, token: u64) -> Option<&[bool]> {
        self.logs.get(&from).filter(|l| l.token == token).map(|l| l.bitmap.as_slice())
    }

    /// Called when this node's CTS has left the antenna; returns when the
    /// BLOCK_ACK is due (SIFS after the granted burst).
    pub fn cts_sent(&mut self, now: SimTime, sifs: SimTime) -> Option<SimTime> {
        let g = self.grant.as_mut()?;
        let at = now + sifs + g.burst + sifs;
        g.block_ack_at = Some(at);
        Some(at)
    }

    /// Closes the grant for `(from, token)` and returns the bitmap to
    /// acknowledge, if any DATA of that grant actually arrived.
    pub fn take_block_ack(&mut self, from: NodeId, token: u64) -> Option<Vec<bool>> {
        let g = self.grant.take_if(|g| g.from == from && g.token == token)?;
        if g.received == 0 {
            return None;
        }
        self.received_bitmap(from, token).map(<[bool]>::to_vec)
    }

    fn extend_nav(&mut self, until: SimTime) -> Option<RxAction> {
        if until > self.nav_until {
            self.nav_until = until;
            Some(RxAction::SetNav(until))
        } else {
            None
        }
    }
}

/// Processes one successfully received frame.
pub fn on_control_frame(rx: &mut RxState, local: LocalView, frame: &Frame, now: SimTime) -> Vec<RxAction> {
    let mut out = Vec::new();
    if let FramePayload::Beacon(b) = &frame.payload {
        out.push(RxAction::Beacon(b.clone()));
        return out;
    }
    let for_me = frame.dst.is(local.me);
    if !for_me {
        if local.virtual_carrier_sense && frame.dst != Destination::Broadcast {
            if let Some(until) = frame.nav_until {
                out.extend(rx.extend_nav(until));
            }
        }
        return out;
    }
    match &frame.payload {
        FramePayload::Rts { token, burst, exchange_end, .. } => {
            let grant_open = rx.grant.as_ref().is_some_and(|g| now < g.exchange_end && g.from != frame.src);
            let idle = matches!(local.phase, MacPhase::Idle | MacPhase::Sensing | MacPhase::Backoff)
                && !local.transmitting
                && !rx.nav_busy(now)
                && !grant_open;
            if idle {
                rx.grant = Some(RxGrant {
                    from: frame.src,
                    token: *token,
                    burst: *burst,
                    exchange_end: *exchange_end,
                    received: 0,
                    block_ack_at: None,
                });
                out.push(RxAction::SendCts {
                    to: frame.src,
                    token: *token,
                    burst: *burst,
                    exchange_end: *exchange_end,
                    delay: local.sifs,
                });
                // Hold our own contention until the exchange we granted is over.
                out.extend(rx.extend_nav(*exchange_end));
            }
        }
        FramePayload::Cts { token, .. } => {
            if local.phase == MacPhase::AwaitCts && local.in_flight == Some((frame.src, *token)) {
                out.push(RxAction::Mac(MacEvent::CtsReceived));
            }
        }
        FramePayload::Data { token, index, segment_len, packet } => {
            let log = rx.logs.entry(frame.src).or_insert_with(|| SegmentLog { token: *token, bitmap: Vec::new() });
            if log.token != *token || log.bitmap.len() != *segment_len as usize {
                *log = SegmentLog { token: *token, bitmap: vec![false; *segment_len as usize] };
            }
            let i = *index as usize;
            if i < log.bitmap.len() && !log.bitmap[i] {
                log.bitmap[i] = true;
                out.push(RxAction::Accept { from: frame.src, packet: packet.clone() });
            }
            if let Some(g) = rx.grant.as_mut().filter(|g| g.from == frame.src && g.token == *token) {
                g.received += 1;
            }
        }
        FramePayload::BlockAck { token, bitmap } => {
            if local.phase == MacPhase::AwaitAck && local.in_flight == Some((frame.src, *token)) {
                out.push(RxAction::Mac(MacEvent::BlockAckReceived(bitmap.clone())));
            }
        }
        FramePayload::Beacon(_) => unreachable!("handled above"),
    }
    out
}
