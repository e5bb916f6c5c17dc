#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use pulsenet::harness::{
    BucketSection, ChipSection, HostConfig, InputConfig, LinkConfig, NodeConfig, RouteSection,
    ScenarioConfig, TopologyConfig, TrainConfig,
};
use pulsenet::pipeline::DeliveryMode;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

pub fn load(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(shipped(name)).expect("shipped config loads")
}

pub fn shipped_configs() -> Vec<PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(shipped(""))
        .expect("configs dir")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    v.sort();
    v
}

fn random_routes(
    rng: &mut ChaCha8Rng,
    neurons: u16,
    buckets: &[BucketSection],
    neuron_counts: &dyn Fn(u16) -> u16,
    map_prob: f64,
    max_delay: u64,
) -> Vec<RouteSection> {
    let mut routes = Vec::new();
    if buckets.is_empty() {
        return routes;
    }
    for source in 0..neurons {
        if !rng.random_bool(map_prob) {
            continue;
        }
        let bucket = rng.random_range(0..buckets.len());
        let dest_count = neuron_counts(buckets[bucket].dest_node);
        routes.push(RouteSection {
            source,
            dest_neuron: rng.random_range(0..dest_count),
            bucket: bucket as u16,
            axonal_delay_ns: rng.random_range(1..=max_delay),
            count: 1,
        });
    }
    routes
}

fn random_buckets(
    rng: &mut ChaCha8Rng,
    nodes: &[u16],
    count: usize,
    max_capacity: u16,
    explicit_budget: bool,
) -> Vec<BucketSection> {
    (0..count)
        .map(|_| BucketSection {
            dest_node: *nodes.choose(rng).unwrap(),
            capacity: rng.random_range(1..=max_capacity),
            transit_budget_ns: (explicit_budget && rng.random_bool(0.5))
                .then(|| rng.random_range(0..=2500)),
        })
        .collect()
}

/// At most three nodes and 100 input events, regular trains only, and
/// receivers that never fire.
pub fn small_scenario(rng: &mut ChaCha8Rng, index: usize) -> ScenarioConfig {
    const DIMS: [[u16; 3]; 7] = [
        [1, 1, 1],
        [2, 1, 1],
        [3, 1, 1],
        [1, 2, 1],
        [1, 3, 1],
        [1, 1, 2],
        [1, 1, 3],
    ];
    let dims = *DIMS.choose(rng).unwrap();
    let addrs: Vec<u16> = (0..dims.iter().product::<u16>()).collect();
    let counts: Vec<u16> = addrs.iter().map(|_| rng.random_range(2..=16)).collect();
    let neuron_count = |a: u16| counts[a as usize];
    let nodes = addrs
        .iter()
        .map(|&a| {
            let n = rng.random_range(1..=3);
            let buckets = random_buckets(rng, &addrs, n, 6, true);
            let routes = random_routes(rng, counts[a as usize], &buckets, &neuron_count, 0.75, 6000);
            NodeConfig {
                address: a,
                chip: ChipSection {
                    neuron_count: counts[a as usize],
                    integration_threshold: 1_000_000,
                    refractory_ns: 0,
                    max_events_per_cycle: rng.random_range(1..=3),
                },
                buckets,
                routes,
            }
        })
        .collect();

    let duration_ns = rng.random_range(300..=30_000);
    let mut inputs = Vec::new();
    let mut budget: u64 = 100;
    let mut driven = std::collections::BTreeSet::new();
    for _ in 0..rng.random_range(1..=4) {
        let node = *addrs.choose(rng).unwrap();
        let k = rng.random_range(1..=3u16).min(counts[node as usize]);
        let neurons: Vec<u16> = (0..k)
            .map(|_| rng.random_range(0..counts[node as usize]))
            .filter(|&n| driven.insert((node, n)))
            .collect();
        if neurons.is_empty() || budget < neurons.len() as u64 {
            continue;
        }
        let count = rng.random_range(1..=(budget / neurons.len() as u64).min(40));
        budget -= count * neurons.len() as u64;
        inputs.push(InputConfig {
            node,
            neurons,
            train: TrainConfig::Regular {
                start_ns: rng.random_range(0..duration_ns),
                interval_ns: *[1, 3, 8, 50, 400, 1500].choose(rng).unwrap(),
                count,
            },
        });
    }

    ScenarioConfig {
        name: format!("small-{index}"),
        seed: index as u64,
        duration_ns,
        tick_ns: *[1, 4, 8, 16].choose(rng).unwrap(),
        header_bytes: rng.random_range(0..=32),
        delivery: if rng.random_bool(0.75) {
            DeliveryMode::Deadline
        } else {
            DeliveryMode::OnArrival
        },
        max_drop_fraction: None,
        bio_time_label: None,
        topology: TopologyConfig {
            dims,
            link: LinkConfig {
                lanes: rng.random_range(1..=12),
                lane_rate_bps: *[8_400_000_000, 1_000_000_000, 200_000_000].choose(rng).unwrap(),
                latency_ns: rng.random_range(1..=800),
            },
        },
        host: HostConfig {
            ring_capacity: *[2, 4, 8, 64].choose(rng).unwrap(),
            latency_ns: rng.random_range(1..=1000),
            poll_interval_ns: rng.random_range(1..=2000),
        },
        nodes,
        inputs,
        output_dir: None,
    }
}

/// Larger randomized system with integrating chips and Poisson drive.
pub fn stress_scenario(rng: &mut ChaCha8Rng, index: usize) -> ScenarioConfig {
    let dims = [
        rng.random_range(1..=4),
        rng.random_range(1..=4),
        rng.random_range(1..=3),
    ];
    let total: u16 = dims.iter().product();
    let mut addrs: Vec<u16> = (0..total).collect();
    addrs.shuffle(rng);
    addrs.truncate(rng.random_range(1..=8).min(total as usize));
    addrs.sort();
    let counts: Vec<(u16, u16)> = addrs.iter().map(|&a| (a, rng.random_range(8..=64))).collect();
    let neuron_count = |a: u16| counts.iter().find(|c| c.0 == a).unwrap().1;
    let nodes = addrs
        .iter()
        .map(|&a| {
            let n = rng.random_range(1..=4);
            let buckets = random_buckets(rng, &addrs, n, 16, true);
            let routes = random_routes(rng, neuron_count(a), &buckets, &neuron_count, 0.9, 20_000);
            NodeConfig {
                address: a,
                chip: ChipSection {
                    neuron_count: neuron_count(a),
                    integration_threshold: rng.random_range(1..=3),
                    refractory_ns: *[0, 0, 50, 400].choose(rng).unwrap(),
                    max_events_per_cycle: rng.random_range(1..=3),
                },
                buckets,
                routes,
            }
        })
        .collect();
    let mut inputs = Vec::new();
    for &a in &addrs {
        if !rng.random_bool(0.6) {
            continue;
        }
        inputs.push(InputConfig {
            node: a,
            neurons: (0..neuron_count(a)).step_by(rng.random_range(1..=4)).collect(),
            train: TrainConfig::Poisson {
                rate_hz: rng.random_range(1e5..2e7),
                start_ns: 0,
                stop_ns: None,
            },
        });
    }
    ScenarioConfig {
        name: format!("stress-{index}"),
        seed: rng.random(),
        duration_ns: rng.random_range(5_000..=40_000),
        tick_ns: *[1, 4, 8, 16].choose(rng).unwrap(),
        header_bytes: rng.random_range(0..=64),
        delivery: if rng.random_bool(0.7) {
            DeliveryMode::Deadline
        } else {
            DeliveryMode::OnArrival
        },
        max_drop_fraction: None,
        bio_time_label: None,
        topology: TopologyConfig {
            dims,
            link: LinkConfig {
                lanes: rng.random_range(1..=12),
                lane_rate_bps: *[8_400_000_000, 1_000_000_000].choose(rng).unwrap(),
                latency_ns: rng.random_range(1..=1000),
            },
        },
        host: HostConfig {
            ring_capacity: *[16, 64, 256].choose(rng).unwrap(),
            latency_ns: rng.random_range(1..=1000),
            poll_interval_ns: rng.random_range(100..=2000),
        },
        nodes,
        inputs,
        output_dir: None,
    }
}
