//! Experiment harness: scenario configs, full-stack runs, reports, sweeps.

mod config;
mod report;
mod scenario;
mod sweep;

pub use config::{
    default_transit_budget, BucketSection, ChipSection, ConfigError, Diagnostic, HostConfig,
    InputConfig, LinkConfig, NodeConfig, NodePlan, RouteSection, ScenarioConfig, ScenarioPlan,
    TopologyConfig, TrainConfig,
};
pub use report::{
    median, percentile, write_spikes_csv, FabricReport, IsiGroup, IsiSample, IsiSummary,
    LatencySample, LatencySummary, LinkReport, MetricsReport, NodeReport, Totals,
};
pub use scenario::{
    input_schedule, run_scenario, run_scenario_with, DeliveryRecord, HostRecording, RunOptions,
    RunOutcome, ScenarioError, SpikeRecord, WireTotals,
};
pub use sweep::{sweep_aggregation, write_sweep_csv, write_sweep_table, SweepRow};
