//! Versioned benchmark manifests, metric computations and report emission.

mod manifest;
pub mod metrics;
mod report;

use thiserror::Error;

pub use manifest::{
    load_manifest, materialize_split, split_hash, validate_manifest, BenchmarkManifest, ColocPreset, ColocRef,
    DetectionThresholds, ManifestRegistry, MaterializedSplit, SplitMode, SplitSpec, Task, Violation, SCHEMA_VERSION,
};
pub use report::{emit_json_lines, emit_report, emit_table, parse_json_lines, MetricReport, ReportFormat, TableOptions};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("manifest violates {} invariant(s): {}", .0.len(), .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvariantViolation(Vec<Violation>),
    #[error("{name}: version {found} does not follow version {previous}")]
    VersionNotIncreasing { name: String, previous: u32, found: u32 },
    #[error("id {0:?} appears more than once")]
    DuplicateId(String),
    #[error("invalid report: {0}")]
    InvalidReport(String),
}

pub type Result<T> = std::result::Result<T, RegistryError>;
