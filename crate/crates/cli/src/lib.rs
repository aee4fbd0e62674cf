//! Experiment harness behind the `fk` binary: flag and config parsing, the
//! named experiments, and deterministic CSV/JSON reports.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

pub use config::Params;
pub use error::CliError;
pub use experiments::{columns, run, EXPERIMENTS};
pub use report::{emit, Format, RunReport, Value, Verdict};
