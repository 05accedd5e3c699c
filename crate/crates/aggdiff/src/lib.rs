//! Configuration, experiments, file formats and the self-test battery
//! around `aggdiff-core`.

pub mod battery;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;

pub use commands::{execute, Command};
pub use config::RunConfig;
pub use error::CliError;
