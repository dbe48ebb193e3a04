//! Batch pipeline around `gcnn-core`: configuration, binary caches and the
//! `precompute` / `train` / `apply` / `eval` commands.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;

pub use config::ExperimentConfig;
pub use error::CliError;
