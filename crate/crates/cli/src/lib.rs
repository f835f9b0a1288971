//! Configuration, dispatch and result records for the `polaron` binary.

pub mod config;
pub mod run;

pub use config::{load_config, parse_config, ConfigError, RunConfig, Scenario};
pub use run::{run_scenario, ResultRecord, Status};
