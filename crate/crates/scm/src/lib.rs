//! Filesystem, dataset, model-adapter and command-line layer over `scm-core`.

pub mod config;
pub mod datasets;
pub mod io;
pub mod process;
pub mod prompts;
pub mod report;
pub mod runner;

pub use config::{AdapterConfig, AdapterKind, RunConfig};
pub use report::{EvalReport, Failure, TileRecord};
pub use runner::{eval_predictions, run_dataset, RunStatus, RunSummary};
