//! Configuration, dispatch and CSV output for the `retention` command.

pub mod config;
pub mod error;
pub mod format;
pub mod run;

pub use config::RunConfig;
pub use error::CliError;
pub use run::{run, Command, Sinks};
