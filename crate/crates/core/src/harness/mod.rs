//! Experiment orchestration: configuration, the dataset x shift x method x
//! seed matrix, sensitivity sweeps, learning-rate traces and summaries.

pub mod config;
pub mod lab;
pub mod matrix;
pub mod output;
pub mod stats;
pub mod sweep;
pub mod trace;

pub use config::RunConfig;
pub use lab::{Lab, SeedSetup};
pub use matrix::{read_manifest, run_matrix, Manifest, MatrixOptions, MatrixOutcome};
pub use output::{read_summary_csv, render_summary, SummaryRow};
pub use sweep::{sensitivity_sweep, sweep_csv, SweepRow, SweepTarget};
pub use trace::{export_lr_trace, TraceRow};
