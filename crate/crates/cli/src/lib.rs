//! Library half of the `misalign` command-line tool.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod pipeline;

pub use commands::{run, Cli};
pub use config::PipelineConfig;
pub use pipeline::{process_one, run_pipeline, Outcome, PipelineBackends, PipelineSettings, RunStats};
