//! Command implementations behind the `projgan` binary.

pub mod config;
pub mod error;
pub mod project;
pub mod setup;
pub mod train;
pub mod verify;

pub use config::{ConfigError, RunConfig};
pub use error::{CliError, CliResult};
