//! Command-line front end for the clipping laboratory: configuration files,
//! output formats and the `analyze`, `train`, `ablate` and `zones` commands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use error::CliError;
