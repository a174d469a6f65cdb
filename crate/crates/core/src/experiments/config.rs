//! Experiment configuration and its JSON file form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cpu::NiceValue;
use crate::error::{Error, Result};
use crate::link::LinkConfig;
use crate::shaper::{ShaperConfig, ShaperMode};
use crate::traffic::{PingConfig, TrafficProfile, UeRampSchedule};

/// The isolation knobs applied to one UPF.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResourcePolicy {
    /// CPU limit (= request) in millicpu; 0 = unlimited.
    pub cpu_millicpu: u32,
    pub nice: Option<NiceValue>,
    pub shaper: ShaperConfig,
}

impl ResourcePolicy {
    pub fn cpu(millicpu: u32) -> Self {
        ResourcePolicy {
            cpu_millicpu: millicpu,
            ..Default::default()
        }
    }

    pub fn nice(value: i32) -> Self {
        ResourcePolicy {
            nice: Some(NiceValue::new(value).expect("nice literal in range")),
            ..Default::default()
        }
    }

    pub fn edt(rate_mbps: f64) -> Self {
        ResourcePolicy {
            shaper: ShaperConfig::edt(rate_mbps),
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cpu_millicpu == 0 && self.nice.is_none() && self.shaper.mode == ShaperMode::None
    }

    pub fn effective_nice(&self) -> NiceValue {
        self.nice.unwrap_or_default()
    }

    /// Field-wise union: every knob set in `other` overrides this one.
    pub fn union(&self, other: &ResourcePolicy) -> ResourcePolicy {
        ResourcePolicy {
            cpu_millicpu: if other.cpu_millicpu > 0 { other.cpu_millicpu } else { self.cpu_millicpu },
            nice: other.nice.or(self.nice),
            shaper: if other.shaper.is_active() {
                other.shaper.clone()
            } else {
                self.shaper.clone()
            },
        }
    }

    /// Compact rendering like `{1000, -5, edt 150}` or `-` when empty.
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if self.cpu_millicpu > 0 {
            parts.push(format!("{}m", self.cpu_millicpu));
        }
        if let Some(n) = self.nice {
            parts.push(format!("nice {}", n.get()));
        }
        match self.shaper.mode {
            ShaperMode::None => {}
            ShaperMode::Edt => parts.push(format!("edt {} Mbps", self.shaper.rate_mbps)),
            ShaperMode::Tbf => parts.push(format!("tbf {} Mbps", self.shaper.rate_mbps)),
        }
        if parts.is_empty() {
            "-".into()
        } else {
            format!("{{{}}}", parts.join(", "))
        }
    }
}

/// Traffic generation settings shared by every slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadSettings {
    pub traffic: TrafficProfile,
    pub ping: PingConfig,
    pub priority_slice_ues: u32,
    pub low_slice_initial_ues: u32,
    pub max_low_slice_ues: u32,
    pub ramp_interval_s: f64,
    /// Offset each UE's frames by its `start_phase`.
    pub stagger_ue_starts: bool,
}

impl Default for WorkloadSettings {
    fn default() -> Self {
        let ramp = UeRampSchedule::default();
        WorkloadSettings {
            traffic: TrafficProfile::default(),
            ping: PingConfig::default(),
            priority_slice_ues: ramp.priority_slice_ues,
            low_slice_initial_ues: ramp.low_slice_initial_ues,
            max_low_slice_ues: ramp.max_low_slice_ues,
            ramp_interval_s: ramp.ramp_interval_s,
            stagger_ue_starts: true,
        }
    }
}

/// Edge-node model settings that are not calibrated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NodeSettings {
    /// Drop-tail bound on bytes waiting at each UPF; 0 = unbounded.
    pub upf_queue_bytes: u64,
    pub quota_period_s: f64,
    /// Stall a UPF while its shaper queue is full.
    pub egress_backpressure: bool,
    /// Extra CPU charged per workload when a shaper is active.
    pub shaper_cpu_surcharge_s: f64,
    pub ping_timeout_s: f64,
    pub sample_interval_s: u64,
}

impl Default for NodeSettings {
    fn default() -> Self {
        NodeSettings {
            upf_queue_bytes: 1 << 20,
            quota_period_s: 0.1,
            egress_backpressure: true,
            shaper_cpu_surcharge_s: 0.0,
            ping_timeout_s: 120.0,
            sample_interval_s: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: u32,
    pub slice_count: u8,
    pub run_length_s: f64,
    pub repetitions: u32,
    #[serde(default)]
    pub constituents: Vec<u32>,
    #[serde(default)]
    pub slice1: ResourcePolicy,
    #[serde(default)]
    pub others: ResourcePolicy,
    #[serde(default)]
    pub workload: WorkloadSettings,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub node: NodeSettings,
}

impl ExperimentConfig {
    pub fn baseline(id: u32, slice_count: u8) -> Self {
        ExperimentConfig {
            id,
            slice_count,
            run_length_s: 1200.0,
            repetitions: 10,
            constituents: Vec::new(),
            slice1: ResourcePolicy::default(),
            others: ResourcePolicy::default(),
            workload: WorkloadSettings::default(),
            link: LinkConfig::default(),
            node: NodeSettings::default(),
        }
    }

    pub fn policy(&self, slice_index: usize) -> &ResourcePolicy {
        if slice_index == 0 {
            &self.slice1
        } else {
            &self.others
        }
    }

    pub fn ramp(&self) -> UeRampSchedule {
        UeRampSchedule {
            priority_slice_ues: self.workload.priority_slice_ues,
            low_slice_initial_ues: self.workload.low_slice_initial_ues,
            max_low_slice_ues: self.workload.max_low_slice_ues,
            ramp_interval_s: self.workload.ramp_interval_s,
            run_length_s: self.run_length_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.slice_count) {
            return Err(Error::InvalidConfig(format!("slice_count {} outside 1-5", self.slice_count)));
        }
        if !(self.run_length_s > 0.0 && self.run_length_s.is_finite()) {
            return Err(Error::InvalidConfig(format!("run_length_s {}", self.run_length_s)));
        }
        if self.node.sample_interval_s == 0 {
            return Err(Error::InvalidConfig("sample_interval_s must be positive".into()));
        }
        if !(self.node.quota_period_s > 0.0) {
            return Err(Error::InvalidConfig("quota_period_s must be positive".into()));
        }
        if !(self.link.capacity_bps > 0.0) || self.link.buffer == 0 {
            return Err(Error::InvalidConfig("link capacity and buffer must be positive".into()));
        }
        if !(self.workload.ramp_interval_s > 0.0) {
            return Err(Error::InvalidConfig("ramp_interval_s must be positive".into()));
        }
        for p in [&self.slice1, &self.others] {
            if !(p.shaper.rate_mbps >= 0.0) {
                return Err(Error::InvalidConfig(format!("shaper rate {}", p.shaper.rate_mbps)));
            }
            if p.shaper.is_active() && p.shaper.queue_capacity == 0 {
                return Err(Error::InvalidConfig("shaper queue_capacity must be positive".into()));
            }
        }
        self.workload.traffic.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
