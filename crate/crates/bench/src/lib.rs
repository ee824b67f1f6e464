//! Monte Carlo harness for the `cdfilter` estimators: scenario configs,
//! shared truth simulation, per-variant ARMSE and timing, CSV output.

pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod scenario;
pub mod selftest;

pub use config::{Example, ScenarioConfig, SweepPoint, VariantSpec};
pub use error::{HarnessError, Result};
pub use output::{emit_csv, parse_csv, read_csv, render_table, write_csv};
pub use scenario::{run_scenario, simulate_truths, RunRecord, TruthSet};
