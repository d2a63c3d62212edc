use std::hash::Hasher;

use fnv::FnvHasher;
use serde::Serialize;

use crate::model::NodeId;
use crate::phy::{FrameKind, LossReason};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Arrived at a full queue.
    QueueOverflow,
    /// Still unacknowledged after the last allowed retransmission round.
    RetryLimit,
    /// Lost on the air with ARQ disabled.
    ChannelLoss,
}

impl DropReason {
    pub const ALL: [DropReason; 3] = [DropReason::QueueOverflow, DropReason::RetryLimit, DropReason::ChannelLoss];

    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::QueueOverflow => "queue_overflow",
            DropReason::RetryLimit => "retry_limit",
            DropReason::ChannelLoss => "channel_loss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Pending,
    Delivered { at: SimTime, last_hop: NodeId },
    Dropped { at: SimTime, reason: DropReason },
}

/// What became of one generated packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketFate {
    pub created_at: SimTime,
    pub payload_bytes: u32,
    pub outcome: Outcome,
}

/// One line of the event trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum TraceEvent {
    Gen { session: u32, seq: u64 },
    Tx { kind: FrameKind, dst: Option<u16>, bytes: u32, token: Option<u64>, end: u64 },
    Rx { from: u16, kind: FrameKind, loss: Option<LossReason> },
    Accept { from: u16, session: u32, seq: u64 },
    Deliver { from: u16, session: u32, seq: u64 },
    Drop { session: u32, seq: u64, reason: DropReason },
    Timeout { timer: &'static str },
    World { action: String },
    Depleted,
    Tick { queued: u64 },
}

#[derive(Serialize)]
struct Line<'a> {
    t: u64,
    node: Option<u16>,
    #[serde(flatten)]
    ev: &'a TraceEvent,
}

/// Streams trace records into the digest, optionally keeping them.
pub struct TraceWriter {
    hasher: FnvHasher,
    lines: Option<Vec<String>>,
    count: u64,
}

impl TraceWriter {
    pub fn new(keep: bool) -> Self {
        TraceWriter { hasher: FnvHasher::default(), lines: keep.then(Vec::new), count: 0 }
    }

    pub fn record(&mut self, t: SimTime, node: Option<NodeId>, ev: TraceEvent) {
        let line = serde_json::to_string(&Line { t: t.as_nanos(), node: node.map(|n| n.0), ev: &ev })
            .expect("trace records serialize");
        self.hasher.write(line.as_bytes());
        self.hasher.write(b"\n");
        self.count += 1;
        if let Some(lines) = self.lines.as_mut() {
            lines.push(line);
        }
    }

    pub fn digest(&self) -> u64 {
        self.hasher.finish()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn into_lines(self) -> Option<Vec<String>> {
        self.lines
    }
}

/// FNV-1a 64 over newline-terminated lines.
pub fn digest_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> u64 {
    let mut h = FnvHasher::default();
    for l in lines {
        h.write(l.as_bytes());
        h.write(b"\n");
    }
    h.finish()
}
