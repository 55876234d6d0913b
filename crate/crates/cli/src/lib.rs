//! Scenario runner: strict configuration, deterministic execution and
//! checksummed artifacts for every experiment in `noma-deepsic`.

pub mod cli;
pub mod config;
pub mod manifest;
pub mod run;

pub use cli::Cli;
pub use config::{parse_config, parse_config_str, ConfigError, RunConfig, Scenario};
pub use manifest::RunManifest;
pub use run::{run_scenario, RunError, RunOptions, RunOutcome};
