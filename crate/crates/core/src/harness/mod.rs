//! Scenario files, the end-to-end pipeline, eps-sweeps, sigma functionals and
//! table output.

pub mod config;
pub mod pipeline;
pub mod sigma;
pub mod sweep;
pub mod tables;

pub use config::ScenarioConfig;
pub use pipeline::{run_pipeline, Report, Setup};
pub use sweep::{epsilon_sweep, SweepTable};
pub use tables::{emit_tables, Table};
