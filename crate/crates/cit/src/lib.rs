//! File formats, run configuration and the `cit` command line on top of
//! `cit-core`.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod jsonl;
pub mod report;

pub use error::{CliError, Result};
