//! Batch experiment front end for the particle mirror descent library:
//! TOML experiment configs, CSV dataset ingestion, synthetic data
//! generation, PMD/SGLD orchestration, and metric emission as plot-ready
//! CSV/JSONL artifacts.

pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod summarize;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
