//! Configuration, acceptance reports and the criterion suite.

pub mod config;
pub mod report;
pub mod suite;

pub use config::ExperimentConfig;
pub use report::{AcceptanceReport, Check, CriterionRow};
pub use suite::{run_criterion, run_experiment, write_outputs, Artifact, Command, Outcome, TITLES};
