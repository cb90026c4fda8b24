//! Batch runner behind the `adaqn` binary: experiment files, seeded runs on
//! a worker pool, reports and oracle suites.

pub mod config;
pub mod report;
pub mod run;
pub mod verify;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad run records: {0}")]
    Record(String),
    #[error(transparent)]
    Core(#[from] adaqn::Error),
}
