//! Scenarios, configuration, output and convergence studies.

pub mod cli;
pub mod config;
pub mod eoc;
pub mod output;
pub mod scenario;

pub use cli::run_cli;
