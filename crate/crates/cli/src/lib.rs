//! Scenario harness: deterministic simulation runs over the middleware
//! stack, the auth-flow demo, and the report formats behind the
//! `simharness` binary.

pub mod authdemo;
pub mod metrics;
pub mod runner;
pub mod scenario;

pub use metrics::MetricsReport;
pub use runner::{run_scenario, run_scenario_realtime, RunOutput, ScenarioError};
pub use scenario::{QosPreset, ScenarioConfig};
