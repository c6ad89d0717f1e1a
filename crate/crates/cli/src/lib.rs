//! Command-line front end: argument parsing, configuration layering and
//! run dispatch.

pub mod args;
pub mod config;
pub mod run;

pub use args::Cli;
pub use config::{parse_config, ConfigError, RunConfig};
pub use run::{dispatch, RunError};
