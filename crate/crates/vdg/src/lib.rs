//! Scenario files, run artifacts, reports and the `vdg` command line.

pub mod cli;
pub mod io;
pub mod report;
pub mod scenario;

pub use scenario::{load_scenario, parse_scenario, LoadError};
pub use vdg_core as core;
