//! Experiment harness: configuration, TSV datasets, the evaluation protocol
//! and result tables.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod report;

pub use config::{DatasetConfig, ExperimentConfig, PlanConfig, SyntheticPair};
pub use dataset::{load_dataset, parse_dataset, write_dataset};
pub use experiment::{combinations, prepare_dataset, run_protocol, Combination, RunPaths, RunSummary};
pub use report::{read_rows, report, ResultRow};
