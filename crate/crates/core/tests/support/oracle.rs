//! Straight-line recomputation of every event's fate for small scenarios.
//! Works from the config alone: no engine code is reused. Assumes regular
//! input trains and receiving chips that never fire.

use std::collections::{BTreeMap, BinaryHeap};
use std::cmp::Reverse;

use pulsenet::harness::{ScenarioConfig, TrainConfig};
use pulsenet::pipeline::DeliveryMode;

/// (target node, dest neuron, origin node, source neuron, emit ns, apply ns)
pub type Fate = (u16, u16, u16, u16, u64, u64);

#[derive(Debug, Default, PartialEq, Eq)]
pub struct OracleResult {
    pub delivered: Vec<Fate>,
    pub unmapped: u64,
    pub expired_tx: u64,
    pub expired_rx: u64,
}

#[derive(Clone, Debug)]
struct Ev {
    dest_neuron: u16,
    deadline: u64,
    origin: u16,
    source: u16,
    emit: u64,
}

struct Packet {
    id: (u16, u16, u64),
    origin: u16,
    dest: u16,
    created: u64,
    events: Vec<Ev>,
}

fn coords(addr: u16, dims: [u16; 3]) -> [u16; 3] {
    let a = addr as u32;
    let (x, y) = (dims[0] as u32, dims[1] as u32);
    [(a % x) as u16, ((a / x) % y) as u16, (a / (x * y)) as u16]
}

fn address(c: [u16; 3], dims: [u16; 3]) -> u16 {
    (c[0] as u32 + dims[0] as u32 * (c[1] as u32 + dims[1] as u32 * c[2] as u32)) as u16
}

/// Links on the dimension-ordered minimal path, as (from node, axis, positive).
fn path(src: u16, dest: u16, dims: [u16; 3]) -> Vec<(u16, usize, bool)> {
    let mut cur = coords(src, dims);
    let goal = coords(dest, dims);
    let mut out = Vec::new();
    for axis in 0..3 {
        let size = dims[axis];
        while cur[axis] != goal[axis] {
            let fwd = (goal[axis] + size - cur[axis]) % size;
            let positive = fwd <= size - fwd;
            out.push((address(cur, dims), axis, positive));
            cur[axis] = if positive {
                (cur[axis] + 1) % size
            } else {
                (cur[axis] + size - 1) % size
            };
        }
    }
    out
}

fn min_hops(a: u16, b: u16, dims: [u16; 3]) -> u64 {
    let (ca, cb) = (coords(a, dims), coords(b, dims));
    (0..3)
        .map(|i| {
            let d = (ca[i] as i64 - cb[i] as i64).unsigned_abs();
            d.min(dims[i] as u64 - d)
        })
        .sum()
}

fn ser_ps(bytes: u64, bw: u64) -> u64 {
    let bits = bytes as u128 * 8;
    ((bits * 1_000_000_000_000 + bw as u128 - 1) / bw as u128) as u64
}

/// Finds the unique tick congruent to `ts8` in the reconstruction window by
/// scanning candidates.
fn expand(ts8: u64, now: u64, tick: u64) -> u64 {
    let nt = now / tick;
    let (lo, hi) = if nt < 128 { (0, 255) } else { (nt - 127, nt + 128) };
    let hits: Vec<u64> = (lo..=hi).filter(|c| c % 256 == ts8).collect();
    assert_eq!(hits.len(), 1);
    hits[0] * tick
}

pub fn evaluate(c: &ScenarioConfig) -> OracleResult {
    let dims = c.topology.dims;
    let tick = c.tick_ns;
    let end = c.duration_ns;
    let link = &c.topology.link;
    let bw = link.lanes as u64 * link.lane_rate_bps;
    let node_of = |a: u16| c.nodes.iter().find(|n| n.address == a).expect("node");
    let mut res = OracleResult::default();

    // External emissions per node, ordered by (time, input, neuron).
    let mut emissions: BTreeMap<u16, Vec<(u64, usize, usize, u16)>> = BTreeMap::new();
    for (i, input) in c.inputs.iter().enumerate() {
        let TrainConfig::Regular { start_ns, interval_ns, count } = input.train else {
            panic!("oracle handles regular trains only");
        };
        for (j, &neuron) in input.neurons.iter().enumerate() {
            for k in 0..count {
                let t = start_ns + k * interval_ns;
                if t < end {
                    emissions.entry(input.node).or_default().push((t, i, j, neuron));
                }
            }
        }
    }

    // Release from the chip port and send-side processing, per node.
    let mut packets: Vec<Packet> = Vec::new();
    for (&node, list) in emissions.iter_mut() {
        list.sort();
        let n = node_of(node);
        let per_tick = n.chip.max_events_per_cycle as u64;
        let mut used: BTreeMap<u64, u64> = BTreeMap::new();
        let mut floor_tick = 0;
        let mut released = Vec::new();
        for &(t, _, _, neuron) in list.iter() {
            let mut rt = (t / tick).max(floor_tick);
            while used.get(&rt).copied().unwrap_or(0) >= per_tick {
                rt += 1;
            }
            *used.entry(rt).or_default() += 1;
            floor_tick = rt;
            released.push((t.max(rt * tick), t, neuron));
        }
        if n.routes.is_empty() {
            continue;
        }

        let budgets: Vec<u64> = n
            .buckets
            .iter()
            .map(|b| {
                b.transit_budget_ns.unwrap_or_else(|| {
                    let size = c.header_bytes as u64 + 8 * b.capacity as u64;
                    let per_hop = 1 + link.latency_ns + ser_ps(size, bw).div_ceil(1000);
                    min_hops(node, b.dest_node, dims) * per_hop
                })
            })
            .collect();
        let mut pending: Vec<Vec<Ev>> = vec![Vec::new(); n.buckets.len()];
        let mut seq = vec![0u64; n.buckets.len()];
        let flush_time = |p: &Vec<Ev>, budget: u64| {
            p.iter().map(|e| e.deadline).min().map(|d| d.saturating_sub(budget))
        };
        let mut emit = |b: usize, at: u64, events: Vec<Ev>, seq: &mut Vec<u64>| {
            packets.push(Packet {
                id: (node, b as u16, seq[b]),
                origin: node,
                dest: n.buckets[b].dest_node,
                created: at,
                events,
            });
            seq[b] += 1;
        };

        for &(now, t, neuron) in &released {
            if now >= end {
                continue;
            }
            let route = n.routes.iter().find(|r| {
                neuron >= r.source && (neuron as u32) < r.source as u32 + r.count as u32
            });
            let Some(r) = route else {
                res.unmapped += 1;
                continue;
            };
            let b = r.bucket as usize;
            let budget = budgets[b];
            // Batches whose flush time has come go out first.
            for (k, p) in pending.iter_mut().enumerate() {
                if let Some(f) = flush_time(p, budgets[k]) {
                    if f <= now {
                        let evs = std::mem::take(p);
                        emit(k, f, evs, &mut seq);
                    }
                }
            }
            let deadline = expand((t / tick) % 256, now, tick) + r.axonal_delay_ns;
            if deadline <= now + budget {
                res.expired_tx += 1;
                continue;
            }
            pending[b].push(Ev {
                dest_neuron: r.dest_neuron + (neuron - r.source),
                deadline,
                origin: node,
                source: neuron,
                emit: t,
            });
            if pending[b].len() >= n.buckets[b].capacity as usize {
                let evs = std::mem::take(&mut pending[b]);
                emit(b, now, evs, &mut seq);
            }
        }
        for (k, p) in pending.iter_mut().enumerate() {
            if let Some(f) = flush_time(p, budgets[k]) {
                let evs = std::mem::take(p);
                emit(k, f.min(end), evs, &mut seq);
            }
        }
    }

    // Fabric: serve link requests in (time, packet id) order.
    let mut busy: BTreeMap<(u16, usize, bool), u64> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    let mut arrivals: Vec<(u64, usize)> = Vec::new();
    let paths: Vec<_> = packets.iter().map(|p| path(p.origin, p.dest, dims)).collect();
    for (i, p) in packets.iter().enumerate() {
        if paths[i].is_empty() {
            arrivals.push((p.created, i));
        } else {
            heap.push(Reverse((p.created, p.id, i, 0usize)));
        }
    }
    while let Some(Reverse((t, _, i, hop))) = heap.pop() {
        let l = paths[i][hop];
        let size = c.header_bytes as u64 + 8 * packets[i].events.len() as u64;
        let start = (t * 1000).max(busy.get(&l).copied().unwrap_or(0));
        let stop = start + ser_ps(size, bw);
        busy.insert(l, stop);
        let arrive = stop.div_ceil(1000) + link.latency_ns;
        if hop + 1 == paths[i].len() {
            arrivals.push((arrive, i));
        } else {
            heap.push(Reverse((arrive, packets[i].id, i, hop + 1)));
        }
    }

    // Receive side.
    for (at, i) in arrivals {
        let p = &packets[i];
        for e in &p.events {
            if e.deadline < at {
                res.expired_rx += 1;
                continue;
            }
            let apply = match c.delivery {
                DeliveryMode::Deadline => e.deadline,
                DeliveryMode::OnArrival => at,
            };
            res.delivered
                .push((p.dest, e.dest_neuron, e.origin, e.source, e.emit, apply));
        }
    }
    res.delivered.sort();
    res
}
