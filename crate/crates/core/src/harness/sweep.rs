//! Parameter sweeps over independent scenario runs.

use std::path::Path;

use serde::Serialize;

use super::config::ScenarioConfig;
use super::scenario::{run_scenario, ScenarioError};

/// One row of the aggregation trade-off table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub bucket_capacity: u16,
    pub header_overhead_ratio: Option<f64>,
    pub dropped_expired_tx: u64,
    pub mean_latency_ns: Option<f64>,
    pub dropped_expired_rx: u64,
    pub late_deliveries: u64,
}

/// Runs `config` once per bucket capacity, in parallel, and returns the
/// rows in the order of `capacities`.
pub fn sweep_aggregation(
    config: &ScenarioConfig,
    capacities: &[u16],
) -> Result<Vec<SweepRow>, ScenarioError> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = capacities
            .iter()
            .map(|&n| {
                let cfg = config.clone().with_bucket_capacity(n);
                scope.spawn(move || {
                    let outcome = run_scenario(&cfg)?;
                    let r = &outcome.report;
                    Ok(SweepRow {
                        bucket_capacity: n,
                        header_overhead_ratio: r.fabric.header_overhead_ratio,
                        dropped_expired_tx: r.totals.counters.dropped_expired_tx,
                        mean_latency_ns: r.latency.mean_ns,
                        dropped_expired_rx: r.totals.counters.dropped_expired_rx,
                        late_deliveries: outcome
                            .deliveries
                            .iter()
                            .filter(|d| d.delivery.at > d.delivery.deadline)
                            .count() as u64,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_sweep_table(std::fs::File::create(path)?, rows)
}

pub fn write_sweep_table<W: std::io::Write>(out: W, rows: &[SweepRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}
