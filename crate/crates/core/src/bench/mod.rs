//! Experiment orchestration: configuration, the end-to-end pipeline, the
//! latency benchmark and report files.

mod config;
mod latency;
mod pipeline;
mod report;

pub use config::{AmplifierConfig, ExperimentConfig, LatencyConfig, Profile, SeedSet};
pub use latency::{bench_latency, latency_inputs, timer_resolution, LatencyStats};
pub use pipeline::{analytic_complexity, run_pipeline, run_until, simulate_block, PipelineStage};
pub use report::{
    emit_complexity, emit_report, read_complexity_csv, read_q_csv, ComplexityRow, PipelineResults, QRow, Stage,
    COMPLEXITY_CSV, COMPLEXITY_PLOT, LATENCY_CSV, LATENCY_PLOT, LATENCY_RAW_CSV, Q_CSV, Q_PLOT,
};
