//! Configuration parsing, run dispatch, and the scenario suites behind the
//! `mdflow` binary.

pub mod config;
pub mod run;
pub mod suite;

pub use config::{parse_config, ConfigError, RunConfig};
pub use run::{run, CheckLine, RunOutcome, Status};
pub use suite::{suite_status, Criterion, Suite};
