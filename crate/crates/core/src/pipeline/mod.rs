//! Per-FPGA pulse pipeline.
//!
//! Send side: 8-bit timestamp expansion, source lookup, deadline formation
//! and per-destination bucket aggregation. Receive side: deadline check and
//! delivery scheduling towards the local chip.

mod bucket;
mod packet;
mod routes;
mod timestamp;

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bucket::{BucketBuffer, BucketConfig, PushOutcome};
pub use packet::{
    EventTrace, PacketId, PulsePacket, RoutedEvent, DEFAULT_HEADER_BYTES, EVENT_ENCODING_BYTES,
};
pub use routes::{RouteEntry, RouteTable};
pub use timestamp::expand_timestamp;

use crate::chip::{ChipEvent, NeuronAddress};
use crate::fabric::NodeAddress;
use crate::sim::SimTime;

/// Upper bound on bucket units per FPGA.
pub const MAX_BUCKETS: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error("source neuron {0} appears more than once in the lookup table")]
    DuplicateSource(u16),
    #[error("bucket index {bucket} out of range ({bucket_count} buckets configured)")]
    BucketOutOfRange { bucket: u16, bucket_count: usize },
    #[error("route for source neuron {0} has zero axonal delay")]
    ZeroDelay(u16),
    #[error("bucket capacity must be ≥1 (bucket {0})")]
    ZeroCapacity(u16),
    #[error("{0} buckets configured, at most {MAX_BUCKETS} supported")]
    TooManyBuckets(usize),
    #[error("packet for {got} arrived at {expected}")]
    MisroutedPacket {
        expected: NodeAddress,
        got: NodeAddress,
    },
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryMode {
    /// Apply each event at exactly its deadline.
    #[default]
    Deadline,
    /// Apply each event as soon as its packet arrives.
    OnArrival,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PipelineCounters {
    pub events_in: u64,
    pub events_out: u64,
    pub dropped_unmapped: u64,
    pub dropped_expired_tx: u64,
    pub dropped_expired_rx: u64,
    pub packets_sent: u64,
    pub packets_received: u64,
}

impl PipelineCounters {
    pub fn dropped(&self) -> u64 {
        self.dropped_unmapped + self.dropped_expired_tx + self.dropped_expired_rx
    }

    /// `events_in == events_out + drops`; meaningful summed over all nodes
    /// once nothing is in flight.
    pub fn is_conserved(&self) -> bool {
        self.events_in == self.events_out + self.dropped()
    }
}

impl AddAssign<&PipelineCounters> for PipelineCounters {
    fn add_assign(&mut self, o: &PipelineCounters) {
        self.events_in += o.events_in;
        self.events_out += o.events_out;
        self.dropped_unmapped += o.dropped_unmapped;
        self.dropped_expired_tx += o.dropped_expired_tx;
        self.dropped_expired_rx += o.dropped_expired_rx;
        self.packets_sent += o.packets_sent;
        self.packets_received += o.packets_received;
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PipelineConfig {
    pub tick: SimTime,
    pub header_bytes: u32,
    pub buckets: Vec<BucketConfig>,
    pub routes: RouteTable,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum IngestFate {
    Queued,
    Unmapped,
    ExpiredTx,
}

#[derive(Debug)]
pub struct IngestOutcome {
    pub fate: IngestFate,
    pub packet: Option<PulsePacket>,
    /// `(bucket, time)` at which [`FpgaPipeline::on_timer`] must run.
    pub timer: Option<(u16, SimTime)>,
}

/// An event accepted by the receive side, to be applied to the local chip.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub dest_neuron: NeuronAddress,
    pub at: SimTime,
    pub deadline: SimTime,
    pub trace: EventTrace,
}

pub struct FpgaPipeline {
    node: NodeAddress,
    tick: SimTime,
    routes: RouteTable,
    buckets: Vec<BucketBuffer>,
    counters: PipelineCounters,
}

impl FpgaPipeline {
    pub fn new(node: NodeAddress, config: PipelineConfig) -> Result<Self, PipelineError> {
        if config.buckets.len() > MAX_BUCKETS {
            return Err(PipelineError::TooManyBuckets(config.buckets.len()));
        }
        if let Some(i) = config.buckets.iter().position(|b| b.capacity == 0) {
            return Err(PipelineError::ZeroCapacity(i as u16));
        }
        if let Some(e) = config
            .routes
            .iter()
            .find(|e| e.bucket_index as usize >= config.buckets.len())
        {
            return Err(PipelineError::BucketOutOfRange {
                bucket: e.bucket_index,
                bucket_count: config.buckets.len(),
            });
        }
        let buckets = config
            .buckets
            .iter()
            .enumerate()
            .map(|(i, b)| BucketBuffer::new(node, i as u16, *b, config.header_bytes))
            .collect();
        Ok(FpgaPipeline {
            node,
            tick: config.tick,
            routes: config.routes,
            buckets,
            counters: PipelineCounters::default(),
        })
    }

    pub fn node(&self) -> NodeAddress {
        self.node
    }

    pub fn counters(&self) -> &PipelineCounters {
        &self.counters
    }

    pub fn buckets(&self) -> &[BucketBuffer] {
        &self.buckets
    }

    pub fn routes(&self) -> &RouteTable {
        &self.routes
    }

    pub fn lookup(&self, source: NeuronAddress) -> Option<(NeuronAddress, u16, SimTime)> {
        self.routes
            .lookup(source)
            .map(|e| (e.dest_neuron, e.bucket_index, e.axonal_delay))
    }

    /// Send-side processing of one event arriving from the chip at `now`.
    pub fn ingest(&mut self, ev: &ChipEvent, now: SimTime) -> IngestOutcome {
        self.counters.events_in += 1;
        let Some((dest_neuron, bucket, delay)) = self.lookup(ev.address) else {
            self.counters.dropped_unmapped += 1;
            return IngestOutcome {
                fate: IngestFate::Unmapped,
                packet: None,
                timer: None,
            };
        };
        let source_time = expand_timestamp(ev.timestamp8, now, self.tick);
        let routed = RoutedEvent {
            dest_neuron,
            deadline: source_time + delay,
            trace: EventTrace {
                origin: self.node,
                source_neuron: ev.address,
                emit_time: ev.emit_time,
            },
        };
        let out = self.buckets[bucket as usize].push(routed, now);
        if out.packet.is_some() {
            self.counters.packets_sent += 1;
        }
        let fate = if out.accepted {
            IngestFate::Queued
        } else {
            self.counters.dropped_expired_tx += 1;
            IngestFate::ExpiredTx
        };
        IngestOutcome {
            fate,
            packet: out.packet,
            timer: out.arm_timer.map(|t| (bucket, t)),
        }
    }

    pub fn on_timer(&mut self, bucket: u16, now: SimTime) -> Option<PulsePacket> {
        let pkt = self.buckets.get_mut(bucket as usize)?.on_timer(now);
        if pkt.is_some() {
            self.counters.packets_sent += 1;
        }
        pkt
    }

    /// End-of-run drain: one packet per non-empty bucket.
    pub fn flush_all(&mut self, now: SimTime) -> Vec<PulsePacket> {
        let packets: Vec<_> = self.buckets.iter_mut().filter_map(|b| b.flush(now)).collect();
        self.counters.packets_sent += packets.len() as u64;
        packets
    }

    /// Receive side: every event whose deadline has not passed is scheduled
    /// for delivery, the rest are dropped.
    pub fn receive_packet(
        &mut self,
        pkt: &PulsePacket,
        now: SimTime,
        mode: DeliveryMode,
    ) -> Result<Vec<Delivery>, PipelineError> {
        if pkt.dest_node != self.node {
            return Err(PipelineError::MisroutedPacket {
                expected: self.node,
                got: pkt.dest_node,
            });
        }
        self.counters.packets_received += 1;
        let mut out = Vec::with_capacity(pkt.events.len());
        for ev in &pkt.events {
            if ev.deadline < now {
                self.counters.dropped_expired_rx += 1;
                continue;
            }
            self.counters.events_out += 1;
            out.push(Delivery {
                dest_neuron: ev.dest_neuron,
                at: match mode {
                    DeliveryMode::Deadline => ev.deadline,
                    DeliveryMode::OnArrival => now,
                },
                deadline: ev.deadline,
                trace: ev.trace,
            });
        }
        Ok(out)
    }
}
