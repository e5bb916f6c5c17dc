mod support;

use proptest::prelude::*;
use pulsenet::harness::{run_scenario, ScenarioError, TrainConfig};
use pulsenet::pipeline::DeliveryMode;
use pulsenet::sim::seeded_rng;

#[test]
fn no_input_gives_an_empty_report() {
    let mut cfg = support::load("demo_two_chip.json");
    cfg.inputs.clear();
    let out = run_scenario(&cfg).unwrap();
    let r = &out.report;
    assert_eq!(r.totals.source_emissions, 0);
    assert_eq!(r.totals.deliveries, 0);
    assert_eq!(r.latency.count, 0);
    assert_eq!(r.latency.mean_ns, None);
    assert_eq!(r.fabric.packets_sent, 0);
    assert_eq!(r.fabric.header_overhead_ratio, None);
    assert!(out.spikes.is_empty());
}

#[test]
fn oversized_bucket_is_flushed_by_its_timer() {
    // Capacity far above the event count: every packet leaves on the
    // deadline timer. The default budget grows with capacity to
    // 1 + 600 + 2602 = 3203 ns, so a batch opened at t flushes at
    // t + 4797 and holds five 1 us spaced events.
    let cfg = support::load("demo_two_chip.json").with_bucket_capacity(4096);
    let out = run_scenario(&cfg).unwrap();
    let r = &out.report;
    assert_eq!(r.totals.deliveries, 100);
    assert_eq!(r.totals.dropped, 0);
    assert!(out.deliveries.iter().all(|d| d.delivery.at == d.delivery.deadline));
    assert_eq!(r.fabric.packets_sent, 20);
}

#[test]
fn inputs_after_the_run_are_ignored() {
    let mut cfg = support::load("demo_two_chip.json");
    cfg.inputs[0].train = TrainConfig::Regular {
        start_ns: cfg.duration_ns,
        interval_ns: 10,
        count: 5,
    };
    let r = run_scenario(&cfg).unwrap().report;
    assert_eq!(r.totals.source_emissions, 0);
}

#[test]
fn invalid_config_is_a_config_error() {
    let mut cfg = support::load("demo_two_chip.json");
    cfg.nodes[0].buckets[0].capacity = 0;
    assert!(matches!(run_scenario(&cfg), Err(ScenarioError::Config(_))));
}

#[test]
fn host_ring_records_every_spike() {
    let cfg = support::load("demo_two_chip_k2.json");
    let r = run_scenario(&cfg).unwrap().report;
    let spikes: u64 = r.nodes.iter().map(|n| n.spikes_emitted).sum();
    assert_eq!(spikes, 150);
    assert_eq!(r.host.records_written, spikes);
    assert_eq!(r.host.records_consumed, spikes);
}

#[test]
fn on_arrival_never_waits_for_the_deadline() {
    let mut cfg = support::load("torus_poisson.json");
    let deadline = run_scenario(&cfg).unwrap().report;
    cfg.delivery = DeliveryMode::OnArrival;
    let eager = run_scenario(&cfg).unwrap().report;
    assert_eq!(deadline.totals.source_emissions > 0, eager.totals.deliveries > 0);
    assert!(eager.latency.max_ns.unwrap() < deadline.latency.min_ns.unwrap());
    assert!(eager.latency.mean_ns.unwrap() < deadline.latency.mean_ns.unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn events_are_conserved_and_never_late(seed in any::<u64>()) {
        let cfg = support::stress_scenario(&mut seeded_rng(seed), 0);
        let out = run_scenario(&cfg).unwrap();
        let t = out.report.totals;
        prop_assert_eq!(t.source_emissions, t.deliveries + t.dropped);
        prop_assert!(out.deliveries.iter().all(|d| d.delivery.at <= d.delivery.deadline));
        prop_assert!(out.deliveries.iter().all(|d| d.delivery.trace.emit_time <= d.delivery.at));
    }

    #[test]
    fn reruns_are_identical(seed in any::<u64>()) {
        let cfg = support::stress_scenario(&mut seeded_rng(seed), 0);
        let a = run_scenario(&cfg).unwrap().report.to_json();
        let b = run_scenario(&cfg).unwrap().report.to_json();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn deadline_mode_applies_exactly_at_the_deadline(seed in any::<u64>()) {
        let mut cfg = support::small_scenario(&mut seeded_rng(seed), 0);
        cfg.delivery = DeliveryMode::Deadline;
        let out = run_scenario(&cfg).unwrap();
        prop_assert!(out.deliveries.iter().all(|d| d.delivery.at == d.delivery.deadline));
    }
}
