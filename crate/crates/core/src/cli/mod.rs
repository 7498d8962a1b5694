//! Batch command-line front end.

pub mod commands;
pub mod config;
pub mod io;

pub use commands::{
    command_check, command_diagnose, command_sample, CommandResult, Overrides, EXIT_FAILURE, EXIT_NOT_CERTIFIED,
    EXIT_OK,
};
pub use config::RunConfig;
