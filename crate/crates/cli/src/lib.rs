//! Command-line front end: stack and raster files, JSON run configuration,
//! manifests and the `simulate`, `filter`, `invert`, `evaluate` and `crlb`
//! subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
