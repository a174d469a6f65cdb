//! Experiment catalog, configuration, the multi-run executor and calibration.

pub mod calibrate;
pub mod catalog;
pub mod config;
pub mod runner;

pub use calibrate::{calibrate, default_anchors, Anchor, CalibrationOptions, CalibrationParams, Statistic};
pub use catalog::{constituents_label, experiment, load_catalog, EXPERIMENT_COUNT};
pub use config::{ExperimentConfig, NodeSettings, ResourcePolicy, WorkloadSettings};
pub use runner::{run_experiment, ExperimentResult};
