//! File formats, configuration, the experiment harness and the command-line
//! front end for `dlkd-core`.

pub mod binio;
pub mod cli;
pub mod config;
pub mod datadir;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod report;

pub use error::{CliError, Result};
