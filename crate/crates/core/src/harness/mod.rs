//! Scenario files, built-in scenarios, metric collection, CSV output and
//! the technology check-list.

mod builtin;
mod csv_out;
mod run;
pub mod scenario;
pub mod taxonomy;

use thiserror::Error;

pub use builtin::{builtin, builtin_json, builtin_names, builtin_scenarios};
pub use csv_out::{emit_csv, repetition_dir};
pub use run::{
    prepare, run, run_batch, BatteryReport, DiscoveryOutcome, MetricsBundle, PingSeries, RouteRow,
    SetupResults, ThroughputSeries,
};
pub use scenario::Scenario;
pub use taxonomy::{Support, TaxonomyReport, TechnologyProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// A built-in name or a path to a scenario file.
pub fn resolve_scenario(
    name_or_path: &str,
    registry: &crate::routing::PackageRegistry,
) -> Result<Scenario, ScenarioError> {
    if let Some(s) = builtin(name_or_path) {
        s.validate(registry)?;
        return Ok(s);
    }
    Scenario::load(std::path::Path::new(name_or_path), registry)
}
