//! Experiment driver: configuration, surrogate persistence and the
//! `run` / `sweep` / `eval` pipelines behind the `asse` binary.

pub mod config;
pub mod document;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use document::SurrogateDocument;
pub use pipeline::{cmd_eval, cmd_run, cmd_sweep, Overrides, StageError};
