//! Batch front-end for cluster MDS: run configuration, artifact files and
//! SVG scatter plots.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;

pub use config::{InputKind, RunConfig};
pub use error::CliError;
