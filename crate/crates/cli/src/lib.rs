//! Configuration files and experiment suites behind the `sim` binary.

pub mod config;
pub mod suite;

pub use config::{parse_config, parse_config_str, Dataset, SimConfig, KEYS};
pub use suite::{plan, run_suite, RunOutcome, RunSpec, SuiteKind, SuiteReport};
