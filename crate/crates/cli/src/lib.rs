//! Batch front end for vortexkam: configuration, subcommands and artifact
//! persistence.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod json;

pub use artifacts::{FileEntry, Manifest};
pub use commands::{run, Command, RunError, RunOptions, RunSummary};
pub use config::{parse_config, parse_config_str, ConfigError, RunConfig};
