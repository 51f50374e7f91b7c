//! The `vita` command: serve the LRS, ingest chat logs, seed the demo cohort
//! and print reports.
//!
//! Exit status: 0 on success, 1 when a command ran but some data failed
//! (uploads, notification delivery), 2 for usage or configuration errors.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::CliError;
