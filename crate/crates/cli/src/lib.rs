//! Library side of the `cbrw` binary, so the commands can be driven from tests.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{cmd_classify, cmd_simulate, cmd_tail, cmd_verify, GridKind, GridSpec, SimParams};
pub use config::ModelConfig;
pub use error::CliError;
