//! Config-driven front end for `nvctl-core`.

pub mod app;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::CliError;
