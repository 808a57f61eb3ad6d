//! Command-line harness: configuration, bound tables, certification and CRA sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_bounds, cmd_certify, cmd_cra, cmd_heatmap, cmd_synth, cmd_train, cmd_xi_export};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
