//! Slice-1 vs others comparison with reductions against the baselines.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::export::ExperimentSummary;
use crate::metrics::{Group, Metric, Window};

/// Slice-1 last-5-min mean of the single-slice baseline, Mbps.
pub const SLICE1_REFERENCE_MBPS: f64 = 154.04;
/// Others last-5-min mean of the five-slice baseline, Mbps.
pub const OTHERS_REFERENCE_MBPS: f64 = 114.59;
/// A slice-1 reduction below this percentage counts as effective isolation.
pub const REDUCTION_THRESHOLD_PCT: f64 = 10.0;

/// Slice-1 throughput at the reduction threshold, Mbps.
pub fn threshold_mbps() -> f64 {
    SLICE1_REFERENCE_MBPS * (1.0 - REDUCTION_THRESHOLD_PCT / 100.0)
}

/// Percent drop of `value` below `reference`.
pub fn reduction_pct(reference: f64, value: f64) -> f64 {
    (reference - value) / reference * 100.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: u32,
    pub window: Window,
    pub runs: u32,
    pub slice1_mean_mbps: Option<f64>,
    pub slice1_median_mbps: Option<f64>,
    pub others_mean_mbps: Option<f64>,
    pub others_median_mbps: Option<f64>,
    pub slice1_latency_median_ms: Option<f64>,
    pub others_latency_median_ms: Option<f64>,
    pub slice1_reduction_pct: Option<f64>,
    pub others_reduction_pct: Option<f64>,
    /// Slice-1 mean stays within the 10% reduction threshold.
    pub within_threshold: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub window: Window,
    pub slice1_reference_mbps: f64,
    pub others_reference_mbps: f64,
    pub threshold_mbps: f64,
    pub rows: Vec<ReportRow>,
}

pub fn report_row(summary: &ExperimentSummary, window: Window) -> ReportRow {
    let stat = |group, metric| summary.stats(window, group, metric);
    let s1 = stat(Group::Slice1, Metric::ReceivedBits);
    let ot = stat(Group::Others, Metric::ReceivedBits);
    let slice1_mean = s1.map(|s| s.mean);
    let others_mean = ot.map(|s| s.mean);
    ReportRow {
        experiment: summary.experiment,
        window,
        runs: summary.runs,
        slice1_mean_mbps: slice1_mean,
        slice1_median_mbps: s1.map(|s| s.median),
        others_mean_mbps: others_mean,
        others_median_mbps: ot.map(|s| s.median),
        slice1_latency_median_ms: stat(Group::Slice1, Metric::LatencyMs).map(|s| s.median),
        others_latency_median_ms: stat(Group::Others, Metric::LatencyMs).map(|s| s.median),
        slice1_reduction_pct: slice1_mean.map(|m| reduction_pct(SLICE1_REFERENCE_MBPS, m)),
        others_reduction_pct: others_mean.map(|m| reduction_pct(OTHERS_REFERENCE_MBPS, m)),
        within_threshold: slice1_mean.map(|m| reduction_pct(SLICE1_REFERENCE_MBPS, m) <= REDUCTION_THRESHOLD_PCT),
    }
}

/// Builds the report, ordered by experiment id.
pub fn build_report(summaries: &[ExperimentSummary], window: Window) -> Result<Report> {
    if summaries.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut rows: Vec<ReportRow> = summaries.iter().map(|s| report_row(s, window)).collect();
    rows.sort_by_key(|r| r.experiment);
    Ok(Report {
        window,
        slice1_reference_mbps: SLICE1_REFERENCE_MBPS,
        others_reference_mbps: OTHERS_REFERENCE_MBPS,
        threshold_mbps: threshold_mbps(),
        rows,
    })
}

impl Report {
    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }
}
