//! Descriptive statistics with boxplot whiskers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std_dev: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outlier_count: usize,
    pub n: usize,
}

/// Quantile by linear interpolation between order statistics (type 7).
/// `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn describe(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(describe_sorted(&sorted))
}

fn describe_sorted(sorted: &[f64]) -> SummaryStats {
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let std_dev = if n > 1 {
        (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let q1 = quantile_sorted(sorted, 0.25);
    let median = quantile_sorted(sorted, 0.5);
    let q3 = quantile_sorted(sorted, 0.75);
    let iqr = q3 - q1;
    let fence_low = q1 - 1.5 * iqr;
    let fence_high = q3 + 1.5 * iqr;
    // fences are clamped to the most extreme data point inside them
    let whisker_low = sorted.iter().copied().find(|&x| x >= fence_low).unwrap_or(q1);
    let whisker_high = sorted.iter().rev().copied().find(|&x| x <= fence_high).unwrap_or(q3);
    let outlier_count = sorted.iter().filter(|&&x| x < whisker_low || x > whisker_high).count();
    SummaryStats {
        mean,
        median,
        std_dev,
        q1,
        q3,
        iqr,
        min: sorted[0],
        max: sorted[n - 1],
        whisker_low,
        whisker_high,
        outlier_count,
        n,
    }
}

/// Values outside the whiskers, ascending.
pub fn outliers(values: &[f64], stats: &SummaryStats) -> Vec<f64> {
    let mut out: Vec<f64> = values
        .iter()
        .copied()
        .filter(|&x| x < stats.whisker_low || x > stats.whisker_high)
        .collect();
    out.sort_by(f64::total_cmp);
    out
}
