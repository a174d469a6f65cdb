//! CSV and JSON renderings of samples, summaries and boxplot data.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{describe, outliers, select, Group, Metric, MetricSample, SummaryStats, Window};
use crate::error::Result;

pub const CSV_HEADER: &str = "experiment,run,metric,slice,time_s,value,priority";

pub fn write_samples_csv<W: Write>(writer: W, samples: &[MetricSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        w.serialize(s)?;
    }
    if samples.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<MetricSample>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Summaries of one metric for one group, keyed by metric name.
pub type MetricSummaries = BTreeMap<String, SummaryStats>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment: u32,
    pub runs: u32,
    pub seeds: Vec<u64>,
    pub run_length_s: f64,
    /// window -> group -> metric -> stats
    pub windows: BTreeMap<String, BTreeMap<String, MetricSummaries>>,
}

impl ExperimentSummary {
    pub fn build(
        experiment: u32,
        slice_count: u8,
        seeds: Vec<u64>,
        run_length_s: f64,
        samples: &[MetricSample],
    ) -> Self {
        let mut windows = BTreeMap::new();
        for window in [Window::Last5Min, Window::Full] {
            let mut groups = BTreeMap::new();
            for group in Group::for_slices(slice_count) {
                let mut metrics = MetricSummaries::new();
                for metric in Metric::ALL {
                    if let Ok(stats) = describe(&select(samples, metric, window, group, run_length_s)) {
                        metrics.insert(metric.name().to_string(), stats);
                    }
                }
                groups.insert(group.label(), metrics);
            }
            windows.insert(window.name().to_string(), groups);
        }
        ExperimentSummary {
            experiment,
            runs: seeds.len() as u32,
            seeds,
            run_length_s,
            windows,
        }
    }

    pub fn stats(&self, window: Window, group: Group, metric: Metric) -> Option<&SummaryStats> {
        self.windows.get(window.name())?.get(&group.label())?.get(metric.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxplotRecord {
    pub experiment: u32,
    pub group: String,
    pub metric: Metric,
    pub unit: String,
    pub window: Window,
    pub whisker_low: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

pub fn boxplots(experiment: u32, slice_count: u8, run_length_s: f64, samples: &[MetricSample]) -> Vec<BoxplotRecord> {
    let mut out = Vec::new();
    for window in [Window::Last5Min, Window::Full] {
        for group in Group::for_slices(slice_count) {
            for metric in Metric::ALL {
                let values = select(samples, metric, window, group, run_length_s);
                let Ok(s) = describe(&values) else { continue };
                out.push(BoxplotRecord {
                    experiment,
                    group: group.label(),
                    metric,
                    unit: metric.unit().to_string(),
                    window,
                    whisker_low: s.whisker_low,
                    q1: s.q1,
                    median: s.median,
                    q3: s.q3,
                    whisker_high: s.whisker_high,
                    outliers: outliers(&values, &s),
                });
            }
        }
    }
    out
}
