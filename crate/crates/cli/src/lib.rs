//! Command-line pipelines for level-set estimation: CSV ingestion, run
//! configuration, JSON reports, GeoJSON and SVG output.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod render;
pub mod report;

pub use commands::{EstimateOutput, SimLevel, SimulateConfig, SimulateOutput, cmd_estimate, cmd_report, cmd_simulate};
pub use config::{ClassFilter, RunConfig};
pub use error::{CliError, Result};
