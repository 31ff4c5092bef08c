//! Experiment plumbing: synthetic data, noise, metrics, benchmark sweeps and the property suite.

mod benchmark;
mod config;
mod metrics;
mod synth;
mod verify;

pub use benchmark::{run_benchmark, MetricReport, ReportRow, SummaryRow, SweepRow, TimingRow};
pub use config::{BenchmarkConfig, GraphSpec};
pub use metrics::{metrics, Metrics};
pub use synth::{add_awgn, random_points, synth_signal};
pub use verify::{verify_properties, Check, VerifyOptions, VerifyReport};
