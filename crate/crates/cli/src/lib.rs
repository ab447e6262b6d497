//! Batch pipeline behind the `reducing-atlas` binary.
//!
//! A run reads one JSON [`config::RunConfig`], executes the requested stages in
//! order and writes `report.json`, `atlas.json`, `paths.csv` and `residuals.csv`.

pub mod config;
pub mod output;
pub mod pipeline;

use std::path::PathBuf;

pub use config::{RunConfig, Stage};
pub use pipeline::{run, Outcome};

/// Process exit codes.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const STAGE_FAILED: i32 = 2;
    pub const VERIFICATION_FAILED: i32 = 3;
    pub const IO_OR_CONFIG: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stage `{stage}` needs the `{missing}` stage to run first")]
    MissingStage { stage: &'static str, missing: &'static str },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        exit::IO_OR_CONFIG
    }
}
