//! Metrics gathered from a finished run, and their JSON/CSV forms.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::fabric::NodeAddress;
use crate::pipeline::{DeliveryMode, PipelineCounters};
use crate::sim::SimTime;

use super::config::ScenarioConfig;
use super::scenario::{Engine, HostRecording, SpikeRecord};

/// One cross-chip event: emitted on `origin`, applied on `target`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LatencySample {
    pub origin: u16,
    pub source_neuron: u16,
    pub target: u16,
    pub dest_neuron: u16,
    pub emit_ns: u64,
    pub apply_ns: u64,
    pub latency_ns: u64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IsiGroup {
    Source,
    Target,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IsiSample {
    pub group: IsiGroup,
    pub node: u16,
    pub neuron: u16,
    pub isi_ns: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LatencySummary {
    pub count: u64,
    pub mean_ns: Option<f64>,
    pub min_ns: Option<u64>,
    pub max_ns: Option<u64>,
    pub p50_ns: Option<u64>,
    pub p90_ns: Option<u64>,
    pub p99_ns: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IsiSummary {
    pub source_nodes: Vec<u16>,
    pub target_nodes: Vec<u16>,
    pub source_samples: u64,
    pub target_samples: u64,
    pub source_median_ns: Option<f64>,
    pub target_median_ns: Option<f64>,
    /// Median target ISI over median source ISI.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeReport {
    pub address: u16,
    pub spikes_emitted: u64,
    pub counters: PipelineCounters,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Totals {
    pub source_emissions: u64,
    pub deliveries: u64,
    pub dropped: u64,
    pub drop_fraction: f64,
    pub counters: PipelineCounters,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkReport {
    pub from: u16,
    pub direction: String,
    pub to: u16,
    pub bytes_sent: u64,
    pub packets_sent: u64,
    pub busy_time_ps: u64,
    pub elapsed_ps: u64,
    pub capacity_bps: u64,
    /// Bits sent over the whole run.
    pub throughput_bps: f64,
    /// Bits sent while the link was busy.
    pub busy_throughput_bps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FabricReport {
    pub packets_sent: u64,
    pub packets_received: u64,
    pub mean_hops: Option<f64>,
    pub header_bytes: u64,
    pub total_bytes: u64,
    pub header_overhead_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub duration_ns: u64,
    pub finished_at_ns: u64,
    pub delivery: DeliveryMode,
    pub time_unit: String,
    pub latency: LatencySummary,
    pub isi: IsiSummary,
    pub totals: Totals,
    pub nodes: Vec<NodeReport>,
    pub links: Vec<LinkReport>,
    pub fabric: FabricReport,
    pub host: HostRecording,
    #[serde(skip)]
    pub latency_samples: Vec<LatencySample>,
    #[serde(skip)]
    pub isi_samples: Vec<IsiSample>,
    #[serde(skip)]
    pub spikes: Vec<SpikeRecord>,
}

/// Nearest-rank percentile of sorted data.
pub fn percentile(sorted: &[u64], p: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

pub fn median(values: &[u64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid] as f64
    } else {
        (v[mid - 1] as f64 + v[mid] as f64) / 2.0
    })
}

fn summarize(latencies: &[u64]) -> LatencySummary {
    if latencies.is_empty() {
        return LatencySummary::default();
    }
    let mut sorted = latencies.to_vec();
    sorted.sort_unstable();
    let sum: u128 = sorted.iter().map(|&v| v as u128).sum();
    LatencySummary {
        count: sorted.len() as u64,
        mean_ns: Some(sum as f64 / sorted.len() as f64),
        min_ns: sorted.first().copied(),
        max_ns: sorted.last().copied(),
        p50_ns: percentile(&sorted, 50.0),
        p90_ns: percentile(&sorted, 90.0),
        p99_ns: percentile(&sorted, 99.0),
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl MetricsReport {
    pub(super) fn build(config: &ScenarioConfig, engine: &Engine, finished_at: SimTime) -> Self {
        let latency_samples: Vec<LatencySample> = engine
            .deliveries
            .iter()
            .filter(|d| d.delivery.trace.origin != d.node)
            .map(|d| {
                let t = d.delivery.trace;
                LatencySample {
                    origin: t.origin.0,
                    source_neuron: t.source_neuron.value(),
                    target: d.node.0,
                    dest_neuron: d.delivery.dest_neuron.value(),
                    emit_ns: t.emit_time.as_ns(),
                    apply_ns: d.delivery.at.as_ns(),
                    latency_ns: (d.delivery.at - t.emit_time).as_ns(),
                }
            })
            .collect();
        let latencies: Vec<u64> = latency_samples.iter().map(|s| s.latency_ns).collect();

        let receiving: std::collections::BTreeSet<NodeAddress> =
            engine.deliveries.iter().map(|d| d.node).collect();
        let group_of = |node: NodeAddress| {
            if engine.driven.contains(&node) {
                Some(IsiGroup::Source)
            } else if receiving.contains(&node) {
                Some(IsiGroup::Target)
            } else {
                None
            }
        };
        let mut last: BTreeMap<(NodeAddress, u16), SimTime> = BTreeMap::new();
        let mut isi_samples = Vec::new();
        for s in &engine.spikes {
            let key = (s.node, s.neuron.value());
            if let (Some(group), Some(prev)) = (group_of(s.node), last.get(&key)) {
                isi_samples.push(IsiSample {
                    group,
                    node: s.node.0,
                    neuron: s.neuron.value(),
                    isi_ns: (s.emit_time - *prev).as_ns(),
                });
            }
            last.insert(key, s.emit_time);
        }
        let isi_of = |g: IsiGroup| -> Vec<u64> {
            isi_samples
                .iter()
                .filter(|s| s.group == g)
                .map(|s| s.isi_ns)
                .collect()
        };
        let (src, tgt) = (isi_of(IsiGroup::Source), isi_of(IsiGroup::Target));
        let (src_med, tgt_med) = (median(&src), median(&tgt));
        let isi = IsiSummary {
            source_nodes: engine.driven.iter().map(|n| n.0).collect(),
            target_nodes: receiving
                .iter()
                .filter(|n| !engine.driven.contains(n))
                .map(|n| n.0)
                .collect(),
            source_samples: src.len() as u64,
            target_samples: tgt.len() as u64,
            source_median_ns: src_med,
            target_median_ns: tgt_med,
            ratio: match (src_med, tgt_med) {
                (Some(s), Some(t)) if s > 0.0 => Some(t / s),
                _ => None,
            },
        };

        let totals = engine.totals();
        let nodes = engine
            .pipelines
            .iter()
            .map(|(&node, p)| NodeReport {
                address: node.0,
                spikes_emitted: engine.spikes.iter().filter(|s| s.node == node).count() as u64,
                counters: *p.counters(),
            })
            .collect();

        let elapsed_ps = finished_at.as_ns() * 1000;
        let fabric = &engine.fabric;
        let links = fabric
            .links()
            .map(|(&(from, dir), model)| {
                let st = model.stats();
                let bits = st.bytes_sent as f64 * 8.0;
                LinkReport {
                    from: from.0,
                    direction: dir.to_string(),
                    to: fabric.topology().neighbor(from, dir).map_or(from.0, |n| n.0),
                    bytes_sent: st.bytes_sent,
                    packets_sent: st.packets_sent,
                    busy_time_ps: st.busy_time_ps,
                    elapsed_ps,
                    capacity_bps: fabric.params().bandwidth_bps(),
                    throughput_bps: if elapsed_ps > 0 {
                        bits * 1e12 / elapsed_ps as f64
                    } else {
                        0.0
                    },
                    busy_throughput_bps: if st.busy_time_ps > 0 {
                        bits * 1e12 / st.busy_time_ps as f64
                    } else {
                        0.0
                    },
                }
            })
            .collect();

        let dropped = totals.dropped();
        MetricsReport {
            scenario: config.name.clone(),
            seed: config.seed,
            duration_ns: config.duration_ns,
            finished_at_ns: finished_at.as_ns(),
            delivery: config.delivery,
            time_unit: config
                .bio_time_label
                .clone()
                .unwrap_or_else(|| "ns".to_string()),
            latency: summarize(&latencies),
            isi,
            totals: Totals {
                source_emissions: totals.events_in,
                deliveries: totals.events_out,
                dropped,
                drop_fraction: ratio(dropped, totals.events_in).unwrap_or(0.0),
                counters: totals,
            },
            nodes,
            links,
            fabric: FabricReport {
                packets_sent: fabric.packets_sent(),
                packets_received: fabric.packets_received(),
                mean_hops: ratio(engine.wire.packet_hops, fabric.packets_received()),
                header_bytes: engine.wire.header_bytes,
                total_bytes: engine.wire.total_bytes,
                header_overhead_ratio: ratio(engine.wire.header_bytes, engine.wire.total_bytes),
            },
            host: engine.host,
            latency_samples,
            isi_samples,
            spikes: engine.spikes.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// True when the configured drop limit was exceeded.
    pub fn exceeds_drop_limit(&self, limit: Option<f64>) -> bool {
        limit.is_some_and(|l| self.totals.drop_fraction > l)
    }

    /// Writes `report.json`, `latency_samples.csv`, `isi_samples.csv` and
    /// `spikes.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::File::create(dir.join("report.json"))?.write_all(self.to_json().as_bytes())?;
        write_csv(&dir.join("latency_samples.csv"), &self.latency_samples)?;
        write_csv(&dir.join("isi_samples.csv"), &self.isi_samples)?;
        write_spikes_csv(&dir.join("spikes.csv"), &self.spikes)?;
        Ok(())
    }
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

/// Chip output as `chip_id,neuron,emit_time_ns,timestamp8`.
pub fn write_spikes_csv(path: &Path, spikes: &[SpikeRecord]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["chip_id", "neuron", "emit_time_ns", "timestamp8"])?;
    for s in spikes {
        w.write_record([
            s.node.0.to_string(),
            s.neuron.value().to_string(),
            s.emit_time.as_ns().to_string(),
            s.timestamp8.to_string(),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<u64> = (1..=10).collect();
        assert_eq!(percentile(&v, 50.0), Some(5));
        assert_eq!(percentile(&v, 90.0), Some(9));
        assert_eq!(percentile(&v, 99.0), Some(10));
        assert_eq!(percentile(&[7], 1.0), Some(7));
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3, 1, 2]), Some(2.0));
        assert_eq!(median(&[4, 1, 2, 3]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
