//! Builds a full system from a validated config and runs it to completion.

use std::collections::{BTreeMap, BTreeSet};

use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::chip::{Chip, ChipError, ChipEvent, NeuronAddress};
use crate::fabric::{Fabric, FabricEffect, FabricError, InFlight, LinkId, NodeAddress};
use crate::pipeline::{Delivery, DeliveryMode, FpgaPipeline, PipelineError, PulsePacket};
use crate::sim::{seeded_rng, ComponentId, Scheduler, SimError, SimTime};
use crate::transport::{
    Endpoint, FpgaRingWriter, HostController, HostRingReader, Notification, RingLayout, RingWrite,
    RmaEngine, TransportError,
};

use super::config::{ConfigError, ScenarioConfig, ScenarioPlan, TrainConfig};
use super::report::MetricsReport;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Chip(#[from] ChipError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Scheduling(#[from] SimError),
}

/// A spike emitted by a chip, external or integrated.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct SpikeRecord {
    pub node: NodeAddress,
    pub neuron: NeuronAddress,
    pub emit_time: SimTime,
    pub timestamp8: u8,
}

impl SpikeRecord {
    fn from_event(node: NodeAddress, ev: &ChipEvent) -> Self {
        SpikeRecord {
            node,
            neuron: ev.address,
            emit_time: ev.emit_time,
            timestamp8: ev.timestamp8,
        }
    }

    /// Host ring record: neuron and emission time, little endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut rec = Vec::with_capacity(11);
        rec.extend_from_slice(&self.neuron.value().to_le_bytes());
        rec.extend_from_slice(&self.emit_time.as_ns().to_le_bytes());
        rec.push(self.timestamp8);
        rec
    }
}

/// An event applied to a chip input.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub node: NodeAddress,
    pub delivery: Delivery,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct HostRecording {
    pub records_written: u64,
    pub records_consumed: u64,
    pub stalls: u64,
    pub polls: u64,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct WireTotals {
    pub header_bytes: u64,
    pub total_bytes: u64,
    pub packet_hops: u64,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Keep every link serialization interval in the outcome.
    pub record_link_intervals: bool,
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: MetricsReport,
    pub spikes: Vec<SpikeRecord>,
    pub deliveries: Vec<DeliveryRecord>,
    pub link_intervals: Option<BTreeMap<LinkId, Vec<(u64, u64)>>>,
}

#[derive(Debug)]
enum Action {
    ExternalSpike { node: NodeAddress, event: ChipEvent },
    ChipDrain { node: NodeAddress },
    BucketTimer { node: NodeAddress, bucket: u16 },
    LinkGrant { link: LinkId },
    PacketArrival { node: NodeAddress, flight: InFlight },
    Deliver { node: NodeAddress, delivery: Delivery },
    RingAnnounce { node: NodeAddress, notification: Notification },
    RingCredit { node: NodeAddress, notification: Notification },
    HostPoll,
}

const HOST: ComponentId = ComponentId(u32::MAX);

fn at_node(node: NodeAddress) -> ComponentId {
    ComponentId(node.0 as u32)
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutcome, ScenarioError> {
    run_scenario_with(config, &RunOptions::default())
}

pub fn run_scenario_with(
    config: &ScenarioConfig,
    options: &RunOptions,
) -> Result<RunOutcome, ScenarioError> {
    let plan = config.validate()?;
    let mut engine = Engine::build(config, &plan)?;
    if options.record_link_intervals {
        engine.fabric.record_intervals();
    }
    let mut sched = Scheduler::new();
    engine.schedule_inputs(&mut sched, config)?;
    sched.schedule(
        SimTime::from_ns(config.host.poll_interval_ns),
        HOST,
        Action::HostPoll,
    )?;

    let duration = config.duration();
    sched.run_until(duration, |s, a| engine.dispatch(s, a));
    engine.check_error()?;
    let nodes: Vec<_> = engine.pipelines.keys().copied().collect();
    for node in nodes {
        let packets = engine.pipelines.get_mut(&node).expect("node").flush_all(duration);
        for p in packets {
            engine.inject(&mut sched, node, p, duration)?;
        }
    }
    sched.run_to_completion(|s, a| engine.dispatch(s, a));
    engine.check_error()?;
    engine.audit()?;

    let finished_at = sched.now().max(duration);
    let report = MetricsReport::build(config, &engine, finished_at);
    Ok(RunOutcome {
        report,
        link_intervals: engine.fabric.intervals().cloned(),
        spikes: engine.spikes,
        deliveries: engine.deliveries,
    })
}

/// Spike times of one externally driven neuron.
pub fn input_schedule(
    config: &ScenarioConfig,
    input_index: usize,
    neuron_index: usize,
) -> Vec<SimTime> {
    let input = &config.inputs[input_index];
    let end = config.duration_ns;
    match input.train {
        TrainConfig::Regular {
            start_ns,
            interval_ns,
            count,
        } => (0..count)
            .map(|i| start_ns.saturating_add(i.saturating_mul(interval_ns)))
            .take_while(|&t| t < end)
            .map(SimTime::from_ns)
            .collect(),
        TrainConfig::Poisson {
            rate_hz,
            start_ns,
            stop_ns,
        } => {
            let stop = stop_ns.unwrap_or(end).min(end);
            let mut rng = seeded_rng(config.seed);
            rng.set_stream(((input_index as u64) << 16) | neuron_index as u64);
            let gaps = Exp::new(rate_hz / 1e9).expect("rate validated positive");
            let mut out = Vec::new();
            let mut t = start_ns as f64;
            let mut last: Option<u64> = None;
            loop {
                t += gaps.sample(&mut rng);
                let ns = (t.ceil() as u64).max(last.map_or(0, |l| l + 1));
                if ns >= stop {
                    break;
                }
                out.push(SimTime::from_ns(ns));
                last = Some(ns);
            }
            out
        }
    }
}

pub(super) struct Engine {
    mode: DeliveryMode,
    duration: SimTime,
    poll_interval: SimTime,
    pub(super) chips: BTreeMap<NodeAddress, Chip>,
    pub(super) pipelines: BTreeMap<NodeAddress, FpgaPipeline>,
    forwarding: BTreeSet<NodeAddress>,
    pub(super) driven: BTreeSet<NodeAddress>,
    pub(super) fabric: Fabric,
    rma: RmaEngine,
    writers: BTreeMap<NodeAddress, FpgaRingWriter>,
    readers: BTreeMap<NodeAddress, HostRingReader>,
    consumed: BTreeMap<NodeAddress, Vec<Vec<u8>>>,
    drains: BTreeSet<(NodeAddress, SimTime)>,
    pub(super) spikes: Vec<SpikeRecord>,
    pub(super) deliveries: Vec<DeliveryRecord>,
    pub(super) wire: WireTotals,
    pub(super) host: HostRecording,
    error: Option<ScenarioError>,
}

impl Engine {
    fn build(config: &ScenarioConfig, plan: &ScenarioPlan) -> Result<Self, ScenarioError> {
        let mut controller = HostController::new();
        let mut rma = RmaEngine::new(SimTime::from_ns(config.host.latency_ns));
        let host_ep = Endpoint::Host(0);
        let mut chips = BTreeMap::new();
        let mut pipelines = BTreeMap::new();
        let mut writers = BTreeMap::new();
        let mut readers = BTreeMap::new();
        let mut forwarding = BTreeSet::new();
        for (i, (&addr, node)) in plan.nodes.iter().enumerate() {
            chips.insert(addr, Chip::new(node.chip.clone())?);
            controller.attach_fpga(addr);
            let programmed = controller.program_pipeline(addr, &node.pipeline)?;
            if programmed != node.pipeline {
                return Err(ScenarioError::Invariant(format!(
                    "node {addr} read back a different pipeline than was programmed"
                )));
            }
            if !programmed.routes.is_empty() {
                forwarding.insert(addr);
            }
            pipelines.insert(addr, FpgaPipeline::new(addr, programmed)?);

            let layout = RingLayout::new(
                plan.ring.capacity,
                i as u64 * plan.ring.region_bytes() as u64,
            )?;
            let fpga_ep = Endpoint::Fpga(addr);
            writers.insert(addr, FpgaRingWriter::new(&mut rma, fpga_ep, host_ep, layout));
            readers.insert(addr, HostRingReader::new(&mut rma, host_ep, fpga_ep, layout));
        }
        let driven = config.inputs.iter().map(|i| NodeAddress(i.node)).collect();
        Ok(Engine {
            mode: config.delivery,
            duration: config.duration(),
            poll_interval: SimTime::from_ns(config.host.poll_interval_ns),
            chips,
            pipelines,
            forwarding,
            driven,
            fabric: Fabric::new(plan.topology, plan.link),
            rma,
            writers,
            readers,
            consumed: BTreeMap::new(),
            drains: BTreeSet::new(),
            spikes: Vec::new(),
            deliveries: Vec::new(),
            wire: WireTotals::default(),
            host: HostRecording::default(),
            error: None,
        })
    }

    fn schedule_inputs(
        &mut self,
        s: &mut Scheduler<Action>,
        config: &ScenarioConfig,
    ) -> Result<(), ScenarioError> {
        let mut per_node: BTreeMap<NodeAddress, Vec<ChipEvent>> = BTreeMap::new();
        for (i, input) in config.inputs.iter().enumerate() {
            let node = NodeAddress(input.node);
            let chip = &self.chips[&node];
            for (j, &neuron) in input.neurons.iter().enumerate() {
                let times = input_schedule(config, i, j);
                let neuron = NeuronAddress::new(neuron as u32)?;
                per_node
                    .entry(node)
                    .or_default()
                    .extend(chip.emit_external(neuron, &times)?);
            }
        }
        for (node, mut events) in per_node {
            events.sort_by_key(|e| e.emit_time);
            for event in events {
                s.schedule(event.emit_time, at_node(node), Action::ExternalSpike { node, event })?;
            }
        }
        Ok(())
    }

    fn check_error(&mut self) -> Result<(), ScenarioError> {
        self.error.take().map_or(Ok(()), Err)
    }

    fn dispatch(&mut self, s: &mut Scheduler<Action>, action: crate::sim::ScheduledAction<Action>) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = self.handle(s, action.payload) {
            self.error = Some(e);
        }
    }

    fn handle(&mut self, s: &mut Scheduler<Action>, action: Action) -> Result<(), ScenarioError> {
        let now = s.now();
        match action {
            Action::ExternalSpike { node, event } => {
                self.chip(node).enqueue_output(event)?;
                self.spikes.push(SpikeRecord::from_event(node, &event));
                self.schedule_drain(s, node)?;
            }
            Action::ChipDrain { node } => {
                self.drains.remove(&(node, now));
                let released = self.chip(node).poll_output(SimTime::ZERO..now + SimTime::from_ns(1));
                for r in released {
                    self.record_to_host(s, node, &r.event, now)?;
                    if now < self.duration && self.forwarding.contains(&node) {
                        let out = self.pipeline(node).ingest(&r.event, now);
                        if let Some((bucket, at)) = out.timer {
                            s.schedule(at, at_node(node), Action::BucketTimer { node, bucket })?;
                        }
                        if let Some(p) = out.packet {
                            self.inject(s, node, p, now)?;
                        }
                    }
                }
                self.schedule_drain(s, node)?;
            }
            Action::BucketTimer { node, bucket } => {
                if let Some(p) = self.pipeline(node).on_timer(bucket, now) {
                    self.inject(s, node, p, now)?;
                }
            }
            Action::LinkGrant { link } => {
                let effects = self.fabric.on_grant(link, now)?;
                self.apply_fabric(s, effects, now)?;
            }
            Action::PacketArrival { node, flight } => {
                let effects = self.fabric.on_arrival(node, flight, now)?;
                self.apply_fabric(s, effects, now)?;
            }
            Action::Deliver { node, delivery } => {
                if let Some(ev) = self.chip(node).apply_input(delivery.dest_neuron, now)? {
                    self.spikes.push(SpikeRecord::from_event(node, &ev));
                    self.schedule_drain(s, node)?;
                }
                self.deliveries.push(DeliveryRecord { node, delivery });
            }
            Action::RingAnnounce { node, notification } => {
                self.readers
                    .get_mut(&node)
                    .expect("reader per node")
                    .on_notification(&notification);
            }
            Action::RingCredit { node, notification } => {
                let writer = self.writers.get_mut(&node).expect("writer per node");
                writer.on_credit(&notification);
                for n in writer.resume(&mut self.rma, now)? {
                    s.schedule(n.arrive_time, HOST, Action::RingAnnounce { node, notification: n })?;
                }
            }
            Action::HostPoll => {
                self.host.polls += 1;
                let mut outstanding = false;
                for (&node, reader) in self.readers.iter_mut() {
                    let poll = reader.host_poll(&mut self.rma, now)?;
                    self.host.records_consumed += poll.records.len() as u64;
                    self.consumed.entry(node).or_default().extend(poll.records);
                    if let Some(c) = poll.credit {
                        s.schedule(
                            c.arrive_time,
                            at_node(node),
                            Action::RingCredit { node, notification: c },
                        )?;
                    }
                    let w = &self.writers[&node];
                    outstanding |= w.write_ptr() + w.queued() as u64 > reader.read_ptr();
                }
                if outstanding || s.pending() > 0 || now < self.duration {
                    s.schedule(now + self.poll_interval, HOST, Action::HostPoll)?;
                }
            }
        }
        Ok(())
    }

    fn chip(&mut self, node: NodeAddress) -> &mut Chip {
        self.chips.get_mut(&node).expect("chip per node")
    }

    fn pipeline(&mut self, node: NodeAddress) -> &mut FpgaPipeline {
        self.pipelines.get_mut(&node).expect("pipeline per node")
    }

    fn schedule_drain(&mut self, s: &mut Scheduler<Action>, node: NodeAddress) -> Result<(), ScenarioError> {
        if let Some(at) = self.chips[&node].next_release() {
            if self.drains.insert((node, at)) {
                s.schedule(at, at_node(node), Action::ChipDrain { node })?;
            }
        }
        Ok(())
    }

    fn record_to_host(
        &mut self,
        s: &mut Scheduler<Action>,
        node: NodeAddress,
        event: &ChipEvent,
        now: SimTime,
    ) -> Result<(), ScenarioError> {
        let record = SpikeRecord::from_event(node, event).encode();
        let writer = self.writers.get_mut(&node).expect("writer per node");
        let stalled = writer.is_stalled();
        self.host.records_written += 1;
        match writer.fpga_ring_write(&mut self.rma, &record, now)? {
            RingWrite::Written(n) => {
                s.schedule(n.arrive_time, HOST, Action::RingAnnounce { node, notification: n })?;
            }
            RingWrite::Stalled => {
                if !stalled {
                    self.host.stalls += 1;
                }
            }
        }
        Ok(())
    }

    fn inject(
        &mut self,
        s: &mut Scheduler<Action>,
        node: NodeAddress,
        packet: PulsePacket,
        now: SimTime,
    ) -> Result<(), ScenarioError> {
        self.wire.header_bytes += packet.header_bytes as u64;
        self.wire.total_bytes += packet.size_bytes();
        let effects = self.fabric.inject(packet, node, now)?;
        self.apply_fabric(s, effects, now)
    }

    fn apply_fabric(
        &mut self,
        s: &mut Scheduler<Action>,
        effects: Vec<FabricEffect>,
        now: SimTime,
    ) -> Result<(), ScenarioError> {
        for effect in effects {
            match effect {
                FabricEffect::Grant { link, at } => {
                    s.schedule(at, at_node(link.0), Action::LinkGrant { link })?;
                }
                FabricEffect::Arrive { node, at, flight } => {
                    s.schedule(at, at_node(node), Action::PacketArrival { node, flight })?;
                }
                FabricEffect::Deliver { node, flight } => {
                    self.wire.packet_hops += flight.hops as u64;
                    let mode = self.mode;
                    let deliveries = self.pipeline(node).receive_packet(&flight.packet, now, mode)?;
                    for d in deliveries {
                        if d.at > d.deadline {
                            return Err(ScenarioError::Invariant(format!(
                                "event for neuron {} on node {node} scheduled at {} after its deadline {}",
                                d.dest_neuron.value(),
                                d.at,
                                d.deadline
                            )));
                        }
                        s.schedule(d.at, at_node(node), Action::Deliver { node, delivery: d })?;
                    }
                }
            }
        }
        Ok(())
    }

    /// End-of-run consistency checks across the whole stack.
    fn audit(&self) -> Result<(), ScenarioError> {
        let fail = |m: String| Err(ScenarioError::Invariant(m));
        if self.fabric.in_flight() != 0 {
            return fail(format!("{} packets still in flight", self.fabric.in_flight()));
        }
        for (node, p) in &self.pipelines {
            if p.buckets().iter().any(|b| !b.pending().is_empty()) {
                return fail(format!("node {node} has unsent events"));
            }
        }
        let totals = self.totals();
        if !totals.is_conserved() {
            return fail(format!(
                "{} events entered the pipelines but {} were delivered and {} dropped",
                totals.events_in,
                totals.events_out,
                totals.dropped()
            ));
        }
        if let Some(late) = self.deliveries.iter().find(|d| d.delivery.at > d.delivery.deadline) {
            return fail(format!("late delivery at {}", late.delivery.at));
        }
        for (&node, chip) in &self.chips {
            if chip.backlog() != 0 {
                return fail(format!("chip {node} still holds {} events", chip.backlog()));
            }
            let expected: Vec<Vec<u8>> = self
                .spikes
                .iter()
                .filter(|s| s.node == node)
                .map(SpikeRecord::encode)
                .collect();
            let got = self.consumed.get(&node).map_or(&[][..], Vec::as_slice);
            if got != expected.as_slice() {
                return fail(format!(
                    "host recorded {} spikes for node {node}, chip emitted {}",
                    got.len(),
                    expected.len()
                ));
            }
        }
        Ok(())
    }

    pub(super) fn totals(&self) -> crate::pipeline::PipelineCounters {
        let mut t = crate::pipeline::PipelineCounters::default();
        for p in self.pipelines.values() {
            t += p.counters();
        }
        t
    }
}
