//! Library surface of the experiment driver, so integration tests can run
//! experiments in-process.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{ExperimentConfig, ExperimentKind};
pub use report::{ExperimentReport, ExportFormat};
pub use runner::{run, RunError};
