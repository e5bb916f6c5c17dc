//! Torus packet fabric: dimension-order routing over serializing links.
//!
//! The fabric is a passive state machine. Every call returns
//! [`FabricEffect`]s that the driver turns into scheduled actions.
//!
//! Link arbitration: requests made during nanosecond `t` are granted by a
//! grant action at `t + 1`, which serves them in `(request time, packet id)`
//! order with departure time `t`. Serialization order on a link therefore
//! never depends on the order in which same-time actions happened to run.

mod link;
mod topology;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use link::{LinkModel, LinkParams, LinkStats, Transmission, DEFAULT_LANE_RATE_BPS, MAX_LANES};
pub use topology::{Direction, Hop, NodeAddress, TorusTopology};

use crate::pipeline::PulsePacket;
use crate::sim::SimTime;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FabricError {
    #[error("invalid torus dimensions {0:?}")]
    InvalidTopology([u16; 3]),
    #[error("{0} is not part of the topology")]
    InvalidNode(NodeAddress),
    #[error("coordinates {0:?} are outside the topology")]
    InvalidCoords([u16; 3]),
    #[error("no route from {from} towards {dest}: link {dir} is down")]
    NoRoute {
        from: NodeAddress,
        dest: NodeAddress,
        dir: Direction,
    },
}

/// Outgoing link of a node.
pub type LinkId = (NodeAddress, Direction);

#[derive(Clone, Debug)]
pub struct InFlight {
    pub packet: PulsePacket,
    pub hops: u32,
    pub injected_at: SimTime,
}

#[derive(Debug)]
pub enum FabricEffect {
    /// Call [`Fabric::on_grant`] for `link` at time `at`.
    Grant { link: LinkId, at: SimTime },
    /// Call [`Fabric::on_arrival`] at `node` at time `at`.
    Arrive {
        node: NodeAddress,
        at: SimTime,
        flight: InFlight,
    },
    /// The packet reached its destination now.
    Deliver { node: NodeAddress, flight: InFlight },
}

struct Request {
    at: SimTime,
    flight: InFlight,
}

pub struct Fabric {
    topology: TorusTopology,
    params: LinkParams,
    links: BTreeMap<LinkId, LinkModel>,
    disabled: BTreeSet<LinkId>,
    queued: BTreeMap<LinkId, Vec<Request>>,
    grants: BTreeSet<(LinkId, SimTime)>,
    packets_sent: u64,
    packets_received: u64,
    intervals: Option<BTreeMap<LinkId, Vec<(u64, u64)>>>,
}

impl Fabric {
    pub fn new(topology: TorusTopology, params: LinkParams) -> Self {
        assert!(
            params.latency >= SimTime::from_ns(1),
            "link latency must cover the 1 ns arbitration step"
        );
        Fabric {
            topology,
            params,
            links: BTreeMap::new(),
            disabled: BTreeSet::new(),
            queued: BTreeMap::new(),
            grants: BTreeSet::new(),
            packets_sent: 0,
            packets_received: 0,
            intervals: None,
        }
    }

    /// Keep every serialization interval for later auditing.
    pub fn record_intervals(&mut self) {
        self.intervals.get_or_insert_with(BTreeMap::new);
    }

    pub fn intervals(&self) -> Option<&BTreeMap<LinkId, Vec<(u64, u64)>>> {
        self.intervals.as_ref()
    }

    pub fn topology(&self) -> &TorusTopology {
        &self.topology
    }

    pub fn params(&self) -> &LinkParams {
        &self.params
    }

    pub fn disable_link(&mut self, link: LinkId) {
        self.disabled.insert(link);
    }

    pub fn packets_sent(&self) -> u64 {
        self.packets_sent
    }

    pub fn packets_received(&self) -> u64 {
        self.packets_received
    }

    pub fn in_flight(&self) -> u64 {
        self.packets_sent - self.packets_received
    }

    pub fn links(&self) -> impl Iterator<Item = (&LinkId, &LinkModel)> {
        self.links.iter()
    }

    /// Dimension-order path from `src` to `dest` as the list of links taken.
    pub fn path(&self, src: NodeAddress, dest: NodeAddress) -> Result<Vec<LinkId>, FabricError> {
        let mut at = src;
        let mut path = Vec::new();
        while let Hop::Forward(dir) = self.topology.route_next_hop(at, dest)? {
            if self.disabled.contains(&(at, dir)) {
                return Err(FabricError::NoRoute { from: at, dest, dir });
            }
            path.push((at, dir));
            at = self.topology.neighbor(at, dir)?;
        }
        Ok(path)
    }

    /// Hands a packet to the fabric at node `from`. A self-addressed packet
    /// is delivered immediately.
    pub fn inject(
        &mut self,
        packet: PulsePacket,
        from: NodeAddress,
        now: SimTime,
    ) -> Result<Vec<FabricEffect>, FabricError> {
        self.topology.coords(packet.dest_node)?;
        self.packets_sent += 1;
        let flight = InFlight {
            packet,
            hops: 0,
            injected_at: now,
        };
        self.route(from, flight, now)
    }

    pub fn on_arrival(
        &mut self,
        node: NodeAddress,
        flight: InFlight,
        now: SimTime,
    ) -> Result<Vec<FabricEffect>, FabricError> {
        self.route(node, flight, now)
    }

    fn route(
        &mut self,
        at: NodeAddress,
        flight: InFlight,
        now: SimTime,
    ) -> Result<Vec<FabricEffect>, FabricError> {
        let dest = flight.packet.dest_node;
        match self.topology.route_next_hop(at, dest)? {
            Hop::Local => {
                self.packets_received += 1;
                Ok(vec![FabricEffect::Deliver { node: at, flight }])
            }
            Hop::Forward(dir) => {
                let link = (at, dir);
                if self.disabled.contains(&link) {
                    return Err(FabricError::NoRoute { from: at, dest, dir });
                }
                self.queued
                    .entry(link)
                    .or_default()
                    .push(Request { at: now, flight });
                let grant_at = now + SimTime::from_ns(1);
                if self.grants.insert((link, grant_at)) {
                    Ok(vec![FabricEffect::Grant { link, at: grant_at }])
                } else {
                    Ok(vec![])
                }
            }
        }
    }

    /// Serves every request on `link` made before `now`.
    pub fn on_grant(&mut self, link: LinkId, now: SimTime) -> Result<Vec<FabricEffect>, FabricError> {
        self.grants.remove(&(link, now));
        let Some(queue) = self.queued.get_mut(&link) else {
            return Ok(vec![]);
        };
        let (mut due, rest): (Vec<Request>, Vec<Request>) =
            std::mem::take(queue).into_iter().partition(|r| r.at < now);
        *queue = rest;
        due.sort_by(|a, b| (a.at, a.flight.packet.id).cmp(&(b.at, b.flight.packet.id)));

        let next = self.topology.neighbor(link.0, link.1)?;
        let params = self.params;
        let model = self
            .links
            .entry(link)
            .or_insert_with(|| LinkModel::new(params));
        let mut effects = Vec::with_capacity(due.len());
        for Request { at, mut flight } in due {
            let tx = model.transmit(flight.packet.size_bytes(), at);
            if let Some(log) = self.intervals.as_mut() {
                log.entry(link).or_default().push((tx.start_ps, tx.end_ps));
            }
            flight.hops += 1;
            effects.push(FabricEffect::Arrive {
                node: next,
                at: tx.arrival,
                flight,
            });
        }
        Ok(effects)
    }
}
