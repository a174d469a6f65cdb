//! Deterministic discrete-event simulator of network-slice contention at an
//! edge UPF node.

pub mod cpu;
pub mod edge;
pub mod error;
pub mod experiments;
pub mod link;
pub mod metrics;
pub mod report;
pub mod shaper;
pub mod sim;
pub mod traffic;

pub use edge::{simulate, RunAudit, RunOutput, SliceAudit};
pub use error::{Error, Result};
pub use experiments::{
    calibrate, default_anchors, experiment, load_catalog, run_experiment, CalibrationOptions, CalibrationParams,
    ExperimentConfig, ExperimentResult, ResourcePolicy,
};
pub use metrics::{Group, Metric, MetricSample, SummaryStats, Window};
pub use sim::SimTime;
pub use traffic::{Granularity, SliceId};
