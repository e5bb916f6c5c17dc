//! Scenario configuration files and their validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chip::{ChipConfig, NeuronAddress, MAX_NEURONS_PER_CHIP};
use crate::fabric::{LinkParams, NodeAddress, TorusTopology, DEFAULT_LANE_RATE_BPS, MAX_LANES};
use crate::pipeline::{
    BucketConfig, DeliveryMode, PipelineConfig, RouteEntry, RouteTable, DEFAULT_HEADER_BYTES,
    EVENT_ENCODING_BYTES, MAX_BUCKETS,
};
use crate::sim::SimTime;
use crate::transport::RingLayout;

/// One problem found in a configuration, located by a field path such as
/// `nodes[0].buckets[1].capacity`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{} problem(s) in config:\n{}", .0.len(), list(.0))]
    Invalid(Vec<Diagnostic>),
}

fn list(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl ConfigError {
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            ConfigError::Invalid(d) => d,
            _ => &[],
        }
    }
}

fn default_tick() -> u64 {
    8
}
fn default_header() -> u32 {
    DEFAULT_HEADER_BYTES
}
fn default_one() -> u16 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub duration_ns: u64,
    #[serde(default = "default_tick")]
    pub tick_ns: u64,
    #[serde(default = "default_header")]
    pub header_bytes: u32,
    #[serde(default)]
    pub delivery: DeliveryMode,
    /// Exceeding this fraction of dropped events fails the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_drop_fraction: Option<f64>,
    /// Label for the time axis in reports; no unit conversion is applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bio_time_label: Option<String>,
    pub topology: TopologyConfig,
    #[serde(default)]
    pub host: HostConfig,
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub inputs: Vec<InputConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub dims: [u16; 3],
    #[serde(default)]
    pub link: LinkConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    pub lanes: u8,
    pub lane_rate_bps: u64,
    pub latency_ns: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            lanes: MAX_LANES,
            lane_rate_bps: DEFAULT_LANE_RATE_BPS,
            latency_ns: 600,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HostConfig {
    pub ring_capacity: u64,
    pub latency_ns: u64,
    pub poll_interval_ns: u64,
}

impl Default for HostConfig {
    fn default() -> Self {
        HostConfig {
            ring_capacity: 64,
            latency_ns: 500,
            poll_interval_ns: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub address: u16,
    #[serde(default)]
    pub chip: ChipSection,
    #[serde(default)]
    pub buckets: Vec<BucketSection>,
    #[serde(default)]
    pub routes: Vec<RouteSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChipSection {
    pub neuron_count: u16,
    pub integration_threshold: u32,
    pub refractory_ns: u64,
    pub max_events_per_cycle: u32,
}

impl Default for ChipSection {
    fn default() -> Self {
        ChipSection {
            neuron_count: MAX_NEURONS_PER_CHIP,
            integration_threshold: 1,
            refractory_ns: 0,
            max_events_per_cycle: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketSection {
    pub dest_node: u16,
    pub capacity: u16,
    /// Derived from the path to `dest_node` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transit_budget_ns: Option<u64>,
}

/// Maps `count` consecutive source neurons starting at `source` onto
/// consecutive destination neurons starting at `dest_neuron`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSection {
    pub source: u16,
    pub dest_neuron: u16,
    pub bucket: u16,
    pub axonal_delay_ns: u64,
    #[serde(default = "default_one")]
    pub count: u16,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub node: u16,
    pub neurons: Vec<u16>,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainConfig {
    Regular {
        start_ns: u64,
        interval_ns: u64,
        count: u64,
    },
    /// Seeded from the scenario seed; stops at `stop_ns` or the run end.
    Poisson {
        rate_hz: f64,
        #[serde(default)]
        start_ns: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stop_ns: Option<u64>,
    },
}

/// Everything needed to build one node, checked and converted.
#[derive(Clone, Debug, PartialEq)]
pub struct NodePlan {
    pub address: NodeAddress,
    pub chip: ChipConfig,
    pub pipeline: PipelineConfig,
}

/// A validated scenario ready to be built.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioPlan {
    pub topology: TorusTopology,
    pub link: LinkParams,
    pub ring: RingLayout,
    pub nodes: BTreeMap<NodeAddress, NodePlan>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn tick(&self) -> SimTime {
        SimTime::from_ns(self.tick_ns)
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_ns(self.duration_ns)
    }

    pub fn link_params(&self) -> LinkParams {
        LinkParams {
            lanes: self.topology.link.lanes,
            lane_rate_bps: self.topology.link.lane_rate_bps,
            latency: SimTime::from_ns(self.topology.link.latency_ns),
        }
    }

    /// Sets every bucket's capacity, leaving derived budgets to follow.
    pub fn with_bucket_capacity(mut self, capacity: u16) -> Self {
        for b in self.nodes.iter_mut().flat_map(|n| n.buckets.iter_mut()) {
            b.capacity = capacity;
        }
        self
    }

    /// Full structural and referential check without running anything.
    pub fn validate(&self) -> Result<ScenarioPlan, ConfigError> {
        let mut v = Validator::default();
        let plan = v.check(self);
        if v.diags.is_empty() {
            Ok(plan.expect("plan exists when there are no diagnostics"))
        } else {
            Err(ConfigError::Invalid(v.diags))
        }
    }
}

/// Default budget: per hop, the 1 ns arbitration step, the link latency and
/// the serialization of a full packet.
pub fn default_transit_budget(
    hops: u64,
    link: &LinkParams,
    header_bytes: u32,
    capacity: u16,
) -> SimTime {
    let size = header_bytes as u64 + capacity as u64 * EVENT_ENCODING_BYTES;
    let per_hop = 1 + link.latency.as_ns() + link.serialization_ns(size).as_ns();
    SimTime::from_ns(hops * per_hop)
}

#[derive(Default)]
struct Validator {
    diags: Vec<Diagnostic>,
}

impl Validator {
    fn err(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            path: path.into(),
            message: message.into(),
        });
    }

    fn check(&mut self, c: &ScenarioConfig) -> Option<ScenarioPlan> {
        if c.duration_ns == 0 {
            self.err("duration_ns", "must be positive");
        }
        if c.tick_ns == 0 || c.tick_ns > u32::MAX as u64 {
            self.err("tick_ns", "must be between 1 and 2^32-1");
        }
        if c.header_bytes > u16::MAX as u32 {
            self.err("header_bytes", "must fit in 16 bits");
        }
        if let Some(f) = c.max_drop_fraction {
            if !(0.0..=1.0).contains(&f) {
                self.err("max_drop_fraction", "must lie in [0, 1]");
            }
        }

        let topology = TorusTopology::new(c.topology.dims)
            .map_err(|_| {
                self.err(
                    "topology.dims",
                    "each dimension must be positive and the product at most 65536",
                )
            })
            .ok();
        let link = &c.topology.link;
        if link.lanes == 0 || link.lanes > MAX_LANES {
            self.err("topology.link.lanes", format!("must be between 1 and {MAX_LANES}"));
        }
        if link.lane_rate_bps == 0 {
            self.err("topology.link.lane_rate_bps", "must be positive");
        }
        if link.latency_ns == 0 {
            self.err("topology.link.latency_ns", "must be at least 1");
        }
        let ring = RingLayout::new(c.host.ring_capacity, 0)
            .map_err(|_| self.err("host.ring_capacity", "must be a power of two, at least 2"))
            .ok();
        if c.host.latency_ns == 0 {
            self.err("host.latency_ns", "must be at least 1");
        }
        if c.host.poll_interval_ns == 0 {
            self.err("host.poll_interval_ns", "must be at least 1");
        }

        // Neuron counts of every declared node, for referential checks.
        let mut declared: BTreeMap<u16, u16> = BTreeMap::new();
        for (i, n) in c.nodes.iter().enumerate() {
            let path = format!("nodes[{i}].address");
            if let Some(t) = &topology {
                if !t.contains(NodeAddress(n.address)) {
                    self.err(&path, format!("node {} is outside the torus", n.address));
                }
            }
            if declared.insert(n.address, n.chip.neuron_count).is_some() {
                self.err(&path, format!("node {} is declared twice", n.address));
            }
        }
        if c.nodes.is_empty() {
            self.err("nodes", "at least one node is required");
        }

        let link_params = c.link_params();
        let mut nodes = BTreeMap::new();
        for (i, n) in c.nodes.iter().enumerate() {
            let chip = ChipConfig {
                neuron_count: n.chip.neuron_count,
                integration_threshold: n.chip.integration_threshold,
                refractory: SimTime::from_ns(n.chip.refractory_ns),
                tick: c.tick(),
                max_events_per_cycle: n.chip.max_events_per_cycle,
            };
            if let Err(e) = chip.validate() {
                self.err(format!("nodes[{i}].chip"), e.to_string());
            }
            if n.buckets.len() > MAX_BUCKETS {
                self.err(
                    format!("nodes[{i}].buckets"),
                    format!("at most {MAX_BUCKETS} buckets per node"),
                );
            }
            let mut buckets = Vec::new();
            for (j, b) in n.buckets.iter().enumerate() {
                let path = format!("nodes[{i}].buckets[{j}]");
                if b.capacity == 0 {
                    self.err(format!("{path}.capacity"), "bucket capacity must be ≥1");
                }
                if !declared.contains_key(&b.dest_node) {
                    self.err(
                        format!("{path}.dest_node"),
                        format!("node {} is not defined", b.dest_node),
                    );
                }
                let budget = match (b.transit_budget_ns, &topology) {
                    (Some(ns), _) => {
                        if ns >= 1 << 48 {
                            self.err(format!("{path}.transit_budget_ns"), "must fit in 48 bits");
                        }
                        SimTime::from_ns(ns)
                    }
                    (None, Some(t)) if t.contains(NodeAddress(b.dest_node)) => {
                        let hops = t
                            .min_hops(NodeAddress(n.address), NodeAddress(b.dest_node))
                            .unwrap_or(0);
                        default_transit_budget(hops as u64, &link_params, c.header_bytes, b.capacity)
                    }
                    _ => SimTime::ZERO,
                };
                buckets.push(BucketConfig {
                    dest_node: NodeAddress(b.dest_node),
                    capacity: b.capacity,
                    transit_budget: budget,
                });
            }

            let mut entries = Vec::new();
            let mut sources = BTreeSet::new();
            for (j, r) in n.routes.iter().enumerate() {
                let path = format!("nodes[{i}].routes[{j}]");
                if r.count == 0 {
                    self.err(format!("{path}.count"), "must be at least 1");
                    continue;
                }
                if r.source as u32 + r.count as u32 > n.chip.neuron_count as u32 {
                    self.err(
                        format!("{path}.source"),
                        format!(
                            "neurons {}..{} do not exist on node {} ({} neurons)",
                            r.source,
                            r.source as u32 + r.count as u32,
                            n.address,
                            n.chip.neuron_count
                        ),
                    );
                }
                if r.axonal_delay_ns == 0 || r.axonal_delay_ns > u32::MAX as u64 {
                    self.err(
                        format!("{path}.axonal_delay_ns"),
                        "must be between 1 and 2^32-1",
                    );
                }
                match n.buckets.get(r.bucket as usize) {
                    None => self.err(
                        format!("{path}.bucket"),
                        format!("bucket {} does not exist on node {}", r.bucket, n.address),
                    ),
                    Some(b) => match declared.get(&b.dest_node) {
                        None => self.err(
                            &path,
                            format!(
                                "route to absent node {} via bucket {}",
                                b.dest_node, r.bucket
                            ),
                        ),
                        Some(&count) => {
                            if r.dest_neuron as u32 + r.count as u32 > count as u32 {
                                self.err(
                                    format!("{path}.dest_neuron"),
                                    format!(
                                        "neurons {}..{} do not exist on node {} ({count} neurons)",
                                        r.dest_neuron,
                                        r.dest_neuron as u32 + r.count as u32,
                                        b.dest_node
                                    ),
                                );
                            }
                        }
                    },
                }
                for k in 0..r.count {
                    let source = r.source as u32 + k as u32;
                    if !sources.insert(source) {
                        self.err(
                            format!("{path}.source"),
                            format!("neuron {source} already has a route"),
                        );
                        break;
                    }
                    if let (Ok(s), Ok(d)) = (
                        NeuronAddress::new(source),
                        NeuronAddress::new(r.dest_neuron as u32 + k as u32),
                    ) {
                        entries.push(RouteEntry {
                            source: s,
                            dest_neuron: d,
                            bucket_index: r.bucket,
                            axonal_delay: SimTime::from_ns(r.axonal_delay_ns),
                        });
                    }
                }
            }
            if let Ok(routes) = RouteTable::from_entries(entries, buckets.len()) {
                nodes.insert(
                    NodeAddress(n.address),
                    NodePlan {
                        address: NodeAddress(n.address),
                        chip,
                        pipeline: PipelineConfig {
                            tick: c.tick(),
                            header_bytes: c.header_bytes,
                            buckets,
                            routes,
                        },
                    },
                );
            }
        }

        let mut driven = BTreeSet::new();
        for (i, input) in c.inputs.iter().enumerate() {
            let path = format!("inputs[{i}]");
            match declared.get(&input.node) {
                None => self.err(
                    format!("{path}.node"),
                    format!("node {} is not defined", input.node),
                ),
                Some(&count) => {
                    for (j, &neuron) in input.neurons.iter().enumerate() {
                        if neuron >= count {
                            self.err(
                                format!("{path}.neurons[{j}]"),
                                format!("neuron {neuron} does not exist on node {}", input.node),
                            );
                        } else if !driven.insert((input.node, neuron)) {
                            self.err(
                                format!("{path}.neurons[{j}]"),
                                format!("neuron {neuron} on node {} is driven twice", input.node),
                            );
                        }
                    }
                }
            }
            match &input.train {
                TrainConfig::Regular { interval_ns, count, .. } => {
                    if *interval_ns == 0 && *count > 1 {
                        self.err(format!("{path}.train.interval_ns"), "must be positive");
                    }
                }
                TrainConfig::Poisson { rate_hz, .. } => {
                    if !(rate_hz.is_finite() && *rate_hz > 0.0) {
                        self.err(format!("{path}.train.rate_hz"), "must be positive and finite");
                    }
                }
            }
        }

        Some(ScenarioPlan {
            topology: topology?,
            link: link_params,
            ring: ring?,
            nodes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> ScenarioConfig {
        ScenarioConfig::from_json(
            r#"{
                "name": "t",
                "duration_ns": 10000,
                "topology": {"dims": [2, 1, 1]},
                "nodes": [
                    {"address": 0,
                     "buckets": [{"dest_node": 1, "capacity": 1}],
                     "routes": [{"source": 0, "dest_neuron": 0, "bucket": 0, "axonal_delay_ns": 8000}]},
                    {"address": 1}
                ],
                "inputs": [{"node": 0, "neurons": [0],
                            "train": {"kind": "regular", "start_ns": 0, "interval_ns": 100, "count": 3}}]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn minimal_config_is_valid() {
        let plan = two_node().validate().unwrap();
        let b = plan.nodes[&NodeAddress(0)].pipeline.buckets[0];
        // one hop: 1 + 600 + ceil(24 B at 100.8 Gb/s) = 603
        assert_eq!(b.transit_budget, SimTime::from_ns(603));
    }

    #[test]
    fn zero_capacity_is_named() {
        let c = two_node().with_bucket_capacity(0);
        let err = c.validate().unwrap_err();
        assert!(err
            .diagnostics()
            .iter()
            .any(|d| d.message == "bucket capacity must be ≥1"
                && d.path == "nodes[0].buckets[0].capacity"));
    }

    #[test]
    fn absent_destination_names_the_route() {
        let mut c = two_node();
        c.nodes[0].buckets[0].dest_node = 7;
        let err = c.validate().unwrap_err();
        let paths: Vec<_> = err.diagnostics().iter().map(|d| d.path.as_str()).collect();
        assert!(paths.contains(&"nodes[0].buckets[0].dest_node"));
        assert!(paths.contains(&"nodes[0].routes[0]"));
    }

    #[test]
    fn every_violation_is_reported() {
        let mut c = two_node();
        c.duration_ns = 0;
        c.nodes[0].routes[0].axonal_delay_ns = 0;
        c.inputs[0].neurons.push(600);
        c.host.ring_capacity = 3;
        assert_eq!(c.validate().unwrap_err().diagnostics().len(), 4);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"name":"x","duration_ns":1,"topology":{"dims":[1,1,1]},"nodes":[],"bogus":1}"#;
        assert!(matches!(
            ScenarioConfig::from_json(text),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let c = two_node();
        assert_eq!(ScenarioConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
