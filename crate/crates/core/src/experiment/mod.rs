//! Replicated estimator studies driven by a JSON config.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{Benchmark, EstimatorKind, ExperimentConfig};
pub use output::{cost_slopes, read_raw_csv, summarize_rows, write_outputs, RawRow, SummaryDocument, SummaryRow};
pub use runner::{run_experiment, ExperimentResults, RawRecord, RunStatus};
