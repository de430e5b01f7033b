//! Command-line front end for `fpcadeconv-core`: configuration, file formats,
//! the parallel experiment runner and the `fpcadeconv` binary's commands.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;

pub use config::RunConfig;
pub use error::{CliError, Result};
