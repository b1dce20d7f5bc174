//! Experiment orchestration for the adrpo laboratory: config parsing,
//! seeded multi-run execution, persistence, comparison reports, and SVG
//! trajectory plots.

pub mod config;
pub mod report;
pub mod runner;
pub mod svg;

pub use config::{parse_config, ConfigError, ExperimentConfig, ExperimentKind, Method};
pub use report::{compare, plot, CompareOutcome};
pub use runner::{load_run, resolve_out_root, run, LoadedRun, RunArtifacts, RunSummary, Stat};
