//! File formats, run configuration and the commands behind the `relclust`
//! binary.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod report;

pub use checkpoint::Checkpoint;
pub use config::{RunConfig, RunMode};
pub use error::{Error, Result};
pub use relclust_core as core;
