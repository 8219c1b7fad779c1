//! File formats, IO and batch commands for the duotok toolkit.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod io;

pub use config::{ConfigError, RunConfig};
pub use error::{Error, Result};
