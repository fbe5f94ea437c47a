//! Command-line front end for `volgeo-core`: JSON run configurations, the
//! `solve`, `ladder`, `verify`, `checkf`, `report` and `inputs` commands, and
//! the CSV, JSON and binary field formats they write.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::RunConfig;
pub use error::{exit, CliError, Result};
