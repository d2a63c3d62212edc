use std::collections::VecDeque;

use thiserror::Error;

use crate::model::{NodeId, Packet, Segment};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueueError {
    #[error("queue full ({capacity} packets), packet {seq} dropped")]
    QueueFull { capacity: usize, seq: u64 },
}

/// General Queue (unrouted), the pool of routed packets awaiting
/// segmentation, and the Transmit Queue of formed segments.
///
/// Capacity bounds the total number of packets held across all three; the
/// segment currently owned by the MAC is not counted here.
#[derive(Debug, Clone)]
pub struct QueuePair {
    general: VecDeque<Packet>,
    routed: VecDeque<Packet>,
    transmit: VecDeque<Segment>,
    capacity: usize,
    dropped: u64,
}

impl QueuePair {
    pub fn new(capacity: usize) -> Self {
        QueuePair {
            general: VecDeque::new(),
            routed: VecDeque::new(),
            transmit: VecDeque::new(),
            capacity,
            dropped: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn general_len(&self) -> usize {
        self.general.len()
    }

    pub fn routed_len(&self) -> usize {
        self.routed.len()
    }

    pub fn transmit_len(&self) -> usize {
        self.transmit.iter().map(Segment::len).sum()
    }

    /// Packets held across all queues.
    pub fn len(&self) -> usize {
        self.general.len() + self.routed.len() + self.transmit_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn general(&self) -> impl Iterator<Item = &Packet> {
        self.general.iter()
    }

    pub fn routed(&self) -> impl Iterator<Item = &Packet> {
        self.routed.iter()
    }

    pub fn transmit_segments(&self) -> impl Iterator<Item = &Segment> {
        self.transmit.iter()
    }

    /// Admits a packet to the General Queue, unrouted.
    pub fn enqueue_outbound(&mut self, mut packet: Packet) -> Result<(), QueueError> {
        if self.len() >= self.capacity {
            self.dropped += 1;
            return Err(QueueError::QueueFull { capacity: self.capacity, seq: packet.seq });
        }
        packet.assigned_next_hop = None;
        self.general.push_back(packet);
        Ok(())
    }

    /// Walks the General Queue in FIFO order, stamping every packet for which
    /// `choose` yields a next hop and moving it to the routed pool. Returns
    /// the number of packets routed.
    pub fn route_with(&mut self, mut choose: impl FnMut(&Packet) -> Option<NodeId>) -> usize {
        let mut kept = VecDeque::with_capacity(self.general.len());
        let mut routed = 0;
        for mut p in self.general.drain(..) {
            match choose(&p) {
                Some(hop) => {
                    p.assigned_next_hop = Some(hop);
                    self.routed.push_back(p);
                    routed += 1;
                }
                None => kept.push_back(p),
            }
        }
        self.general = kept;
        routed
    }

    /// Puts packets back at the head of the General Queue with their route
    /// cleared. They were admitted before, so capacity is not rechecked.
    pub fn return_to_general(&mut self, packets: Vec<Packet>) {
        for mut p in packets.into_iter().rev() {
            p.assigned_next_hop = None;
            self.general.push_front(p);
        }
    }

    /// Next hop of the oldest routed packet.
    pub fn oldest_routed_hop(&self) -> Option<NodeId> {
        self.routed.front().and_then(|p| p.assigned_next_hop)
    }

    /// Groups up to `segment_size` routed packets bound for `next_hop`, in
    /// their original order, into one segment. Short segments are formed
    /// whenever at least one such packet exists.
    pub fn form_segment(&mut self, next_hop: NodeId, segment_size: usize, token: u64) -> Option<Segment> {
        let mut taken = Vec::new();
        let mut rest = VecDeque::with_capacity(self.routed.len());
        for p in self.routed.drain(..) {
            if taken.len() < segment_size && p.assigned_next_hop == Some(next_hop) {
                taken.push(p);
            } else {
                rest.push_back(p);
            }
        }
        self.routed = rest;
        if taken.is_empty() {
            return None;
        }
        Some(Segment::new(token, next_hop, taken, segment_size).expect("packets filtered by next hop"))
    }

    /// Number of routed packets waiting for `next_hop`.
    pub fn routed_for(&self, next_hop: NodeId) -> usize {
        self.routed.iter().filter(|p| p.assigned_next_hop == Some(next_hop)).count()
    }

    pub fn push_transmit(&mut self, segment: Segment) {
        self.transmit.push_back(segment);
    }

    pub fn pop_transmit(&mut self) -> Option<Segment> {
        self.transmit.pop_front()
    }

    /// Removes every packet from every queue.
    pub fn drain_all(&mut self) -> Vec<Packet> {
        let mut out: Vec<Packet> = self.general.drain(..).collect();
        out.extend(self.routed.drain(..));
        for s in self.transmit.drain(..) {
            out.extend(s.into_packets());
        }
        out
    }
}
