use crate::fabric::NodeAddress;
use crate::sim::SimTime;

use super::packet::{PacketId, PulsePacket, RoutedEvent};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct BucketConfig {
    pub dest_node: NodeAddress,
    /// Events per packet (`N`).
    pub capacity: u16,
    /// Margin reserved between a flush and the earliest pending deadline.
    pub transit_budget: SimTime,
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct PushOutcome {
    pub packet: Option<PulsePacket>,
    pub accepted: bool,
    /// Set when the flush time of the pending batch was created or moved
    /// earlier; the driver should call [`BucketBuffer::on_timer`] then.
    pub arm_timer: Option<SimTime>,
}

/// Aggregation buffer for one statically configured destination node.
#[derive(Clone, Debug)]
pub struct BucketBuffer {
    index: u16,
    origin: NodeAddress,
    config: BucketConfig,
    header_bytes: u32,
    pending: Vec<RoutedEvent>,
    next_sequence: u64,
}

impl BucketBuffer {
    pub fn new(origin: NodeAddress, index: u16, config: BucketConfig, header_bytes: u32) -> Self {
        assert!(config.capacity >= 1, "bucket capacity must be ≥1");
        BucketBuffer {
            index,
            origin,
            config,
            header_bytes,
            pending: Vec::with_capacity(config.capacity as usize),
            next_sequence: 0,
        }
    }

    pub fn index(&self) -> u16 {
        self.index
    }

    pub fn config(&self) -> &BucketConfig {
        &self.config
    }

    pub fn dest_node(&self) -> NodeAddress {
        self.config.dest_node
    }

    pub fn pending(&self) -> &[RoutedEvent] {
        &self.pending
    }

    /// Earliest pending deadline minus the transit budget.
    pub fn flush_at(&self) -> Option<SimTime> {
        self.pending
            .iter()
            .map(|e| e.deadline)
            .min()
            .map(|d| d.saturating_sub(self.config.transit_budget))
    }

    /// Adds an event. A batch whose flush time has already come is sent
    /// first, so the outcome does not depend on whether the flush timer or
    /// the push runs first at equal times. Events that can no longer make
    /// their deadline (`deadline <= now + transit_budget`) are rejected.
    pub fn push(&mut self, ev: RoutedEvent, now: SimTime) -> PushOutcome {
        let mut out = PushOutcome::default();
        if self.flush_at().is_some_and(|t| t <= now) {
            out.packet = self.take(now);
        }
        if ev.deadline <= now + self.config.transit_budget {
            return out;
        }
        out.accepted = true;
        let before = self.flush_at();
        self.pending.push(ev);
        if self.pending.len() >= self.config.capacity as usize {
            debug_assert!(out.packet.is_none());
            out.packet = self.take(now);
        } else {
            let after = self.flush_at();
            if after != before {
                out.arm_timer = after;
            }
        }
        out
    }

    /// Flush-timer callback; stale timers are harmless.
    pub fn on_timer(&mut self, now: SimTime) -> Option<PulsePacket> {
        if self.flush_at().is_some_and(|t| t <= now) {
            self.take(now)
        } else {
            None
        }
    }

    /// Unconditional flush of whatever is pending.
    pub fn flush(&mut self, now: SimTime) -> Option<PulsePacket> {
        self.take(now)
    }

    fn take(&mut self, now: SimTime) -> Option<PulsePacket> {
        if self.pending.is_empty() {
            return None;
        }
        let id = PacketId {
            origin: self.origin,
            bucket: self.index,
            sequence: self.next_sequence,
        };
        self.next_sequence += 1;
        Some(PulsePacket {
            id,
            dest_node: self.config.dest_node,
            header_bytes: self.header_bytes,
            events: std::mem::replace(
                &mut self.pending,
                Vec::with_capacity(self.config.capacity as usize),
            ),
            created_at: now,
        })
    }
}
