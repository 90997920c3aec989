//! Experiment harness: configuration, replication, figures and demos.

pub mod config;
pub mod experiment;
pub mod figures;
pub mod lower_bound;

pub use config::{CellSide, EnvironmentConfig, EnvironmentVariant, NRule, Overrides, PolicyName, PolicySettings, RunConfig};
pub use experiment::{manifest_hash, run_experiment, simulate, ExperimentOutput, ResultRow, RunManifest, RunRow};
pub use figures::{reproduce_figure, FigureId};
pub use lower_bound::{lower_bound_demo, LowerBoundConfig, LowerBoundRow};
