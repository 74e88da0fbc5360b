//! Experiment orchestration: disturbance synthesis, preset tasks, config
//! loading, the replication benchmark, result export, and the CLI.

pub mod check;
pub mod cli;
pub mod config;
pub mod disturbance;
pub mod experiment;
pub mod export;
pub mod tasks;

pub use disturbance::{make_disturbance, DisturbanceKind, DisturbanceLevel, DisturbanceSpec};
pub use experiment::{run_experiment, ControllerStats, ExperimentResult, ExperimentSpec, PlanSetup, RunRecord};
pub use export::{export_results, ExportFormat};
