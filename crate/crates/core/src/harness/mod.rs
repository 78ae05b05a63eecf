//! Training, evaluation, benchmarking and reporting.

pub mod bench;
pub mod config;
pub mod evaluate;
pub mod optim;
pub mod report;
pub mod train;

pub use bench::{benchmark, BenchOutcome};
pub use config::{ExperimentConfig, ModelEntry, Overrides};
pub use evaluate::{copy_last_frame, evaluate_checkpoint, evaluate_copy_baseline, evaluate_model};
pub use report::{write_report, ResultRow, ResultsTable, Strip};
pub use train::{train, train_model, RunRecord, TrainData, TrainOutcome};
