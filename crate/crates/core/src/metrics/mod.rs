//! Per-slice observations sampled every 30 s and their summaries.

pub mod export;
pub mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use stats::{describe, outliers, quantile_sorted, SummaryStats};

use crate::error::{Error, Result};
use crate::sim::SimTime;
use crate::traffic::SliceId;

pub const SAMPLE_INTERVAL_S: u64 = 30;
/// Length of the peak-contention window at the end of a run.
pub const LAST_WINDOW_S: f64 = 300.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Throughput delivered to the server over the preceding window, Mbps.
    ReceivedBits,
    /// Round-trip time of one probe, ms, stamped with its send time.
    LatencyMs,
    /// Share of one core used by the slice's UPF over the preceding window.
    CpuFraction,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::ReceivedBits, Metric::LatencyMs, Metric::CpuFraction];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ReceivedBits => "received_bits",
            Metric::LatencyMs => "latency_ms",
            Metric::CpuFraction => "cpu_fraction",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Metric::ReceivedBits => "Mbps",
            Metric::LatencyMs => "ms",
            Metric::CpuFraction => "cores",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub experiment: u32,
    pub run: u32,
    pub metric: Metric,
    pub slice: SliceId,
    pub time_s: f64,
    pub value: f64,
    pub priority: bool,
}

impl MetricSample {
    pub fn new(experiment: u32, run: u32, metric: Metric, slice: SliceId, time_s: f64, value: f64) -> Self {
        MetricSample {
            experiment,
            run,
            metric,
            slice,
            time_s,
            value,
            priority: slice.is_priority(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// `t` in `(0, run_length]`.
    Full,
    /// `t` in `(run_length - 300, run_length]`.
    #[default]
    #[serde(rename = "last5m")]
    Last5Min,
}

impl Window {
    pub fn contains(self, t: f64, run_length_s: f64) -> bool {
        let start = match self {
            Window::Full => 0.0,
            Window::Last5Min => run_length_s - LAST_WINDOW_S,
        };
        t > start && t <= run_length_s
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Full => "full",
            Window::Last5Min => "last5m",
        }
    }
}

impl FromStr for Window {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Window::Full),
            "last5m" => Ok(Window::Last5Min),
            other => Err(Error::InvalidConfig(format!("unknown window {other:?}"))),
        }
    }
}

/// Which slices a summary pools.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Group {
    Slice1,
    /// Slices 2-5 pooled.
    Others,
    Slice(SliceId),
}

impl Group {
    pub fn contains(self, slice: SliceId) -> bool {
        match self {
            Group::Slice1 => slice.is_priority(),
            Group::Others => !slice.is_priority(),
            Group::Slice(s) => s == slice,
        }
    }

    pub fn label(self) -> String {
        match self {
            Group::Slice1 => "slice1".into(),
            Group::Others => "others".into(),
            Group::Slice(s) => format!("slice{s}"),
        }
    }

    /// Groups reported for an experiment with `slice_count` slices.
    pub fn for_slices(slice_count: u8) -> Vec<Group> {
        let mut groups = vec![Group::Slice1];
        if slice_count > 1 {
            groups.push(Group::Others);
            groups.extend((2..=slice_count).map(|s| Group::Slice(SliceId(s))));
        }
        groups
    }
}

impl FromStr for Group {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slice1" => Ok(Group::Slice1),
            "others" => Ok(Group::Others),
            other => other
                .strip_prefix("slice")
                .and_then(|n| n.parse::<u8>().ok())
                .filter(|n| (2..=5).contains(n))
                .map(|n| Group::Slice(SliceId(n)))
                .ok_or_else(|| Error::InvalidConfig(format!("unknown group {other:?}"))),
        }
    }
}

impl From<Group> for String {
    fn from(g: Group) -> String {
        g.label()
    }
}

impl TryFrom<String> for Group {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Values of `metric` for `group` with time inside `window`.
pub fn select(samples: &[MetricSample], metric: Metric, window: Window, group: Group, run_length_s: f64) -> Vec<f64> {
    samples
        .iter()
        .filter(|s| s.metric == metric && group.contains(s.slice) && window.contains(s.time_s, run_length_s))
        .map(|s| s.value)
        .collect()
}

/// Pooled statistics over every matching sample of every run.
pub fn summarize(
    samples: &[MetricSample],
    metric: Metric,
    window: Window,
    group: Group,
    run_length_s: f64,
) -> Result<SummaryStats> {
    describe(&select(samples, metric, window, group, run_length_s))
}

/// Mean of the per-run means, the alternative to pooling.
pub fn mean_of_run_means(
    samples: &[MetricSample],
    metric: Metric,
    window: Window,
    group: Group,
    run_length_s: f64,
) -> Result<f64> {
    let mut per_run: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for s in samples {
        if s.metric == metric && group.contains(s.slice) && window.contains(s.time_s, run_length_s) {
            let e = per_run.entry(s.run).or_default();
            e.0 += s.value;
            e.1 += 1;
        }
    }
    if per_run.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(per_run.values().map(|(sum, n)| sum / *n as f64).sum::<f64>() / per_run.len() as f64)
}

/// Mean received throughput of `slice` over the whole run, Mbps.
pub fn full_window_mean(samples: &[MetricSample], slice: SliceId, run_length_s: f64) -> f64 {
    let v = select(samples, Metric::ReceivedBits, Window::Full, Group::Slice(slice), run_length_s);
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Delivered bits per slice, binned into sampling windows by delivery time.
/// Bin `k` covers `((k - 1) * interval, k * interval]`.
#[derive(Clone, Debug)]
pub struct ThroughputBins {
    interval: SimTime,
    bins: Vec<Vec<f64>>,
}

impl ThroughputBins {
    pub fn new(slices: usize, interval: SimTime, run_length: SimTime) -> Self {
        let ticks = (run_length.as_nanos() / interval.as_nanos()) as usize + 1;
        ThroughputBins {
            interval,
            bins: vec![vec![0.0; ticks]; slices],
        }
    }

    pub fn ticks(&self) -> usize {
        self.bins.first().map_or(0, Vec::len)
    }

    /// Deliveries after the last tick are ignored.
    pub fn record(&mut self, slice: SliceId, at: SimTime, bits: f64) {
        let k = at.as_nanos().div_ceil(self.interval.as_nanos()) as usize;
        if let Some(b) = self.bins[slice.index()].get_mut(k) {
            *b += bits;
        }
    }

    pub fn bits(&self, slice: SliceId, tick: usize) -> f64 {
        self.bins[slice.index()][tick]
    }

    pub fn samples(&self, experiment: u32, run: u32) -> Vec<MetricSample> {
        let secs = self.interval.as_secs_f64();
        let mut out = Vec::new();
        for (i, bins) in self.bins.iter().enumerate() {
            for (k, bits) in bins.iter().enumerate() {
                let t = k as f64 * secs;
                let mbps = bits / secs / 1e6;
                out.push(MetricSample::new(experiment, run, Metric::ReceivedBits, SliceId::from_index(i), t, mbps));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(slice: u8, t: f64, v: f64) -> MetricSample {
        MetricSample::new(1, 0, Metric::ReceivedBits, SliceId(slice), t, v)
    }

    #[test]
    fn windows() {
        assert!(!Window::Last5Min.contains(900.0, 1200.0));
        assert!(Window::Last5Min.contains(930.0, 1200.0));
        assert!(Window::Last5Min.contains(1200.0, 1200.0));
        assert!(!Window::Full.contains(0.0, 1200.0));
        assert!(Window::Full.contains(30.0, 1200.0));
    }

    #[test]
    fn priority_flag_follows_slice() {
        assert!(sample(1, 0.0, 0.0).priority);
        assert!(!sample(2, 0.0, 0.0).priority);
    }

    #[test]
    fn others_never_include_slice1() {
        let samples: Vec<_> = (1..=5).map(|s| sample(s, 1000.0, f64::from(s))).collect();
        let v = select(&samples, Metric::ReceivedBits, Window::Last5Min, Group::Others, 1200.0);
        assert_eq!(v, vec![2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn full_window_mean_cases() {
        let constant: Vec<_> = (0..=40).map(|k| sample(1, f64::from(k) * 30.0, 150.0)).collect();
        assert_eq!(full_window_mean(&constant, SliceId(1), 1200.0), 150.0);
        let zero: Vec<_> = (0..=40).map(|k| sample(1, f64::from(k) * 30.0, 0.0)).collect();
        assert_eq!(full_window_mean(&zero, SliceId(1), 1200.0), 0.0);
    }

    #[test]
    fn run_means_differ_from_pooled_when_runs_are_uneven() {
        let mut samples = vec![sample(1, 1000.0, 10.0), sample(1, 1100.0, 10.0)];
        let mut other = sample(1, 1000.0, 40.0);
        other.run = 1;
        samples.push(other);
        let pooled = summarize(&samples, Metric::ReceivedBits, Window::Last5Min, Group::Slice1, 1200.0).unwrap();
        assert_eq!(pooled.mean, 20.0);
        let per_run = mean_of_run_means(&samples, Metric::ReceivedBits, Window::Last5Min, Group::Slice1, 1200.0).unwrap();
        assert_eq!(per_run, 25.0);
    }

    #[test]
    fn bins_count_and_boundaries() {
        let mut bins = ThroughputBins::new(5, SimTime::from_secs(30), SimTime::from_secs(1200));
        assert_eq!(bins.ticks(), 41);
        bins.record(SliceId(1), SimTime::from_secs(30), 8.0);
        bins.record(SliceId(1), SimTime::from_nanos(30_000_000_001), 16.0);
        bins.record(SliceId(1), SimTime::from_secs(1300), 1e9);
        assert_eq!(bins.bits(SliceId(1), 1), 8.0);
        assert_eq!(bins.bits(SliceId(1), 2), 16.0);
        let samples = bins.samples(5, 0);
        assert_eq!(samples.len(), 5 * 41);
        assert!(samples.iter().filter(|s| s.slice == SliceId(3)).all(|s| s.value == 0.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Summed window samples times the window length equal the bits
            // delivered inside the window.
            #[test]
            fn bins_conserve_bits(deliveries in prop::collection::vec((1u64..1_200_000, 1u8..=5, 1u32..100_000), 0..500)) {
                let mut bins = ThroughputBins::new(5, SimTime::from_secs(30), SimTime::from_secs(1200));
                let mut total = 0.0;
                for &(ms, slice, bytes) in &deliveries {
                    bins.record(SliceId(slice), SimTime::from_millis(ms), f64::from(bytes) * 8.0);
                    total += f64::from(bytes) * 8.0;
                }
                let sum: f64 = bins.samples(1, 0).iter().map(|s| s.value * 30.0 * 1e6).sum();
                prop_assert!((sum - total).abs() <= 1e-6 * total.max(1.0));
            }
        }
    }
}
