//! Configuration loading, simulation orchestration, and report emission.

pub mod config;
pub mod report;
pub mod sim;

pub use config::{load_config, parse_config, resolve_seed, ConfigError, SimConfig};
pub use report::{emit_report, diff_reports, MetricsReport, PairedReport};
pub use sim::{baseline_config, paired_run, run_simulation, SimError, Simulation};
