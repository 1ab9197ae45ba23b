//! Config-driven experiment suites and metrics persistence.
//!
//! Every run appends one JSON object per (seed, arm, round) to
//! `metrics.jsonl` and rewrites `summary.csv` with the final table.

mod config;
mod experiments;
mod metrics;

pub use config::{
    load_config, Arm, CeilingConfig, CommConfig, ExperimentConfig, ExperimentKind, ExperimentSection, ProbeConfig,
};
pub use experiments::{
    ceiling_oracle, comm_report, domain_classification_probe, overhead_ratio, overlap_variant, probe_once,
    rounds_to_reach, run_arms, run_experiment, server_overlap_probe, weighting_ablation, Outcome, ProbeResult,
    RunOptions,
};
pub use metrics::{domain_key, MetricsRecord, MetricsSink, RecordContext, SummaryTable};
