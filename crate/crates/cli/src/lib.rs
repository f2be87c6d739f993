//! The `helios` command line: serve the simulated photometer, run
//! experiments against it, and drive the LLM helpers.

mod cli;
pub mod commands;
pub mod config;
mod error;

pub use cli::{run, Cli, Command, Target};
pub use config::{resolve, CliConfig, FileConfig, Overrides};
pub use error::CliError;
