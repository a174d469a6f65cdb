//! Multi-run executor.

use rayon::prelude::*;

use super::calibrate::CalibrationParams;
use super::config::ExperimentConfig;
use crate::edge::{simulate, RunAudit, RunOutput};
use crate::error::{Error, Result};
use crate::metrics::export::{boxplots, BoxplotRecord, ExperimentSummary};
use crate::metrics::{describe, mean_of_run_means, select, Group, Metric, MetricSample, SummaryStats, Window};

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub params: CalibrationParams,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunOutput>,
}

/// Runs `reps` independent repetitions with seeds `seed + k`, in parallel.
pub fn run_experiment(
    config: &ExperimentConfig,
    params: &CalibrationParams,
    reps: u32,
    seed: u64,
) -> Result<ExperimentResult> {
    if reps == 0 {
        return Err(Error::ZeroRepetitions);
    }
    config.validate()?;
    let seeds: Vec<u64> = (0..reps).map(|k| seed.wrapping_add(u64::from(k))).collect();
    let runs = seeds
        .par_iter()
        .enumerate()
        .map(|(k, &s)| simulate(config, params, k as u32, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        config: config.clone(),
        params: params.clone(),
        seeds,
        runs,
    })
}

impl ExperimentResult {
    pub fn samples(&self) -> impl Iterator<Item = &MetricSample> {
        self.runs.iter().flat_map(|r| r.samples.iter())
    }

    pub fn all_samples(&self) -> Vec<MetricSample> {
        self.samples().cloned().collect()
    }

    pub fn audits(&self) -> Vec<&RunAudit> {
        self.runs.iter().map(|r| &r.audit).collect()
    }

    pub fn values(&self, metric: Metric, window: Window, group: Group) -> Vec<f64> {
        self.runs
            .iter()
            .flat_map(|r| select(&r.samples, metric, window, group, self.config.run_length_s))
            .collect()
    }

    pub fn stats(&self, metric: Metric, window: Window, group: Group) -> Result<SummaryStats> {
        describe(&self.values(metric, window, group))
    }

    pub fn mean(&self, metric: Metric, window: Window, group: Group) -> Result<f64> {
        Ok(self.stats(metric, window, group)?.mean)
    }

    pub fn mean_of_run_means(&self, metric: Metric, window: Window, group: Group) -> Result<f64> {
        mean_of_run_means(&self.all_samples(), metric, window, group, self.config.run_length_s)
    }

    pub fn summary(&self) -> ExperimentSummary {
        ExperimentSummary::build(
            self.config.id,
            self.config.slice_count,
            self.seeds.clone(),
            self.config.run_length_s,
            &self.all_samples(),
        )
    }

    pub fn boxplots(&self) -> Vec<BoxplotRecord> {
        boxplots(self.config.id, self.config.slice_count, self.config.run_length_s, &self.all_samples())
    }
}
