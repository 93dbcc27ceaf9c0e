//! File formats, run configuration, corpus runner and command-line front end
//! for latent SDE change point detection.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod runner;

pub use error::{CliError, Result};
