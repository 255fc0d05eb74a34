//! Configuration, experiment drivers and output formats for the
//! `formation` command line tool.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_optimize, cmd_simulate, cmd_sweep};
pub use config::{BenchmarkFormation, RunConfig};
pub use error::CliError;
