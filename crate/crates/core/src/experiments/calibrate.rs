//! Fitting the model's free parameters to published anchor results.
//!
//! The throughput anchors fix `cost_per_byte`, `cpu_capacity_cores` and
//! `upf_max_cores` jointly: a coarse grid picks a start point, then damped
//! Gauss-Newton refines it in log space. The base one-way delay only shifts
//! latencies, so it is solved last by inverting the latency anchor.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::catalog::experiment;
use crate::edge::simulate;
use crate::error::{Error, Result};
use crate::metrics::{describe, select, Group, Metric, MetricSample, Window};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Mean,
    Median,
}

/// One published result the model is fitted to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub experiment: u32,
    pub group: Group,
    pub metric: Metric,
    pub window: Window,
    pub statistic: Statistic,
    pub target: f64,
}

impl Anchor {
    pub fn new(experiment: u32, group: Group, metric: Metric, window: Window, statistic: Statistic, target: f64) -> Self {
        Anchor {
            experiment,
            group,
            metric,
            window,
            statistic,
            target,
        }
    }

    /// The anchor's statistic over `samples`.
    pub fn measure(&self, samples: &[MetricSample], run_length_s: f64) -> Result<f64> {
        let stats = describe(&select(samples, self.metric, self.window, self.group, run_length_s))?;
        Ok(match self.statistic {
            Statistic::Mean => stats.mean,
            Statistic::Median => stats.median,
        })
    }

    pub fn label(&self) -> String {
        format!(
            "exp {} {} {} {:?} ({})",
            self.experiment,
            self.group.label(),
            self.metric.name(),
            self.statistic,
            self.window.name()
        )
        .to_lowercase()
    }
}

/// The four anchors: three last-5-min throughput means and one latency median.
pub fn default_anchors() -> Vec<Anchor> {
    use Metric::*;
    use Statistic::*;
    let w = Window::Last5Min;
    vec![
        Anchor::new(1, Group::Slice1, ReceivedBits, w, Mean, 154.04),
        Anchor::new(5, Group::Slice1, ReceivedBits, w, Mean, 119.12),
        Anchor::new(8, Group::Others, ReceivedBits, w, Mean, 54.98),
        Anchor::new(1, Group::Slice1, LatencyMs, Window::Full, Median, 125.80),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    /// CPU-seconds per byte processed by a UPF.
    pub cost_per_byte: f64,
    pub cpu_capacity_cores: f64,
    /// Most CPU a single UPF can use at once.
    pub upf_max_cores: f64,
    pub base_one_way_delay_s: f64,
    #[serde(default)]
    pub anchors: Vec<Anchor>,
    /// Relative error per anchor, in the order of `anchors`.
    #[serde(default)]
    pub errors: Vec<f64>,
    #[serde(default = "default_true")]
    pub converged: bool,
    /// Simulated runs spent by the fit.
    #[serde(default)]
    pub runs: u32,
}

fn default_true() -> bool {
    true
}

impl Default for CalibrationParams {
    /// Output of `calibrate(&default_anchors(), &CalibrationOptions::default())`.
    fn default() -> Self {
        CalibrationParams {
            cost_per_byte: 3.638071827470569e-8,
            cpu_capacity_cores: 2.709078003145977,
            upf_max_cores: 0.7005365882814353,
            base_one_way_delay_s: 0.03979936825,
            anchors: default_anchors(),
            errors: vec![
                0.000016229550765835526,
                0.0001888851578239905,
                -0.000136413241179391,
                -1.987281394028702e-8,
            ],
            converged: true,
            runs: 374,
        }
    }
}

impl CalibrationParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cost_per_byte", self.cost_per_byte),
            ("cpu_capacity_cores", self.cpu_capacity_cores),
            ("upf_max_cores", self.upf_max_cores),
            ("base_one_way_delay_s", self.base_one_way_delay_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn max_error(&self) -> f64 {
        self.errors.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: CalibrationParams = serde_json::from_str(&fs::read_to_string(path)?)?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CalibrationOptions {
    /// Grid bounds for cost per byte (log-spaced).
    pub cost_range: (f64, f64),
    pub capacity_range: (f64, f64),
    pub ceiling_range: (f64, f64),
    /// Grid points for (cost, capacity, ceiling).
    pub grid: [usize; 3],
    /// Target max relative error over the throughput anchors.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_runs: u32,
    pub seed: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            cost_range: (2.5e-8, 5.0e-8),
            capacity_range: (2.0, 4.0),
            ceiling_range: (0.5, 1.0),
            grid: [8, 5, 3],
            tolerance: 0.005,
            max_iterations: 12,
            max_runs: 500,
            seed: 42,
        }
    }
}

/// Result of fitting a parameter vector to targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Fit {
    pub x: [f64; 3],
    /// Signed relative error per target.
    pub errors: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

impl Fit {
    pub fn max_error(&self) -> f64 {
        max_abs(&self.errors)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, e| m.max(e.abs()))
}

fn rel_errors(pred: &[f64], targets: &[f64]) -> Vec<f64> {
    pred.iter().zip(targets).map(|(p, t)| (p - t) / t).collect()
}

fn grid_points(lo: f64, hi: f64, n: usize, log: bool) -> Vec<f64> {
    if n <= 1 {
        return vec![if log { (lo * hi).sqrt() } else { (lo + hi) / 2.0 }];
    }
    (0..n)
        .map(|i| {
            let f = i as f64 / (n - 1) as f64;
            if log {
                (lo.ln() + f * (hi.ln() - lo.ln())).exp()
            } else {
                lo + f * (hi - lo)
            }
        })
        .collect()
}

/// Solves the 3x3 system `a x = b` by Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Fits `x = (cost, capacity, ceiling)` so that `model(x)` matches `targets`.
///
/// `budget` caps model evaluations. Bounds: capacity within
/// `capacity_range`, ceiling no larger than capacity.
pub fn fit<F>(targets: &[f64], opts: &CalibrationOptions, budget: usize, mut model: F) -> Result<Fit>
where
    F: FnMut(&[[f64; 3]]) -> Result<Vec<Vec<f64>>>,
{
    let lower = [1e-10, opts.capacity_range.0, 1e-3];
    let upper = [1e-5, opts.capacity_range.1, opts.capacity_range.1];
    let clamp = |y: [f64; 3]| -> [f64; 3] {
        let mut x = [0.0; 3];
        for i in 0..3 {
            x[i] = y[i].exp().clamp(lower[i], upper[i]);
        }
        x[2] = x[2].min(x[1]);
        x
    };

    let mut grid = Vec::new();
    for &c in &grid_points(opts.cost_range.0, opts.cost_range.1, opts.grid[0], true) {
        for &k in &grid_points(opts.capacity_range.0, opts.capacity_range.1, opts.grid[1], false) {
            for &p in &grid_points(opts.ceiling_range.0, opts.ceiling_range.1, opts.grid[2], false) {
                grid.push([c, k, p.min(k)]);
            }
        }
    }
    if grid.len() > budget {
        return Err(Error::InvalidConfig(format!(
            "grid of {} points exceeds the budget of {budget} evaluations",
            grid.len()
        )));
    }
    let mut evaluations = grid.len();
    let preds = model(&grid)?;
    let (mut x, mut err) = grid
        .iter()
        .zip(&preds)
        .map(|(x, p)| (*x, rel_errors(p, targets)))
        .min_by(|a, b| max_abs(&a.1).total_cmp(&max_abs(&b.1)))
        .ok_or(Error::EmptySamples)?;

    let residual = |e: &[f64]| -> Vec<f64> { e.iter().map(|v| (1.0 + v).max(1e-9).ln()).collect() };
    let mut mu = 1e-3;
    for _ in 0..opts.max_iterations {
        if max_abs(&err) <= opts.tolerance || evaluations + 4 > budget {
            break;
        }
        let y: [f64; 3] = [x[0].ln(), x[1].ln(), x[2].ln()];
        let h: f64 = 0.01;
        let probes: Vec<[f64; 3]> = (0..3)
            .map(|j| {
                let mut yj = y;
                // step away from an active upper bound
                yj[j] += if x[j] * h.exp() > upper[j] { -h } else { h };
                clamp(yj)
            })
            .collect();
        let pp = model(&probes)?;
        evaluations += 3;
        let r0 = residual(&err);
        let mut jac = vec![[0.0; 3]; targets.len()];
        for j in 0..3 {
            let dy = probes[j][j].ln() - y[j];
            let rj = residual(&rel_errors(&pp[j], targets));
            for i in 0..targets.len() {
                jac[i][j] = if dy != 0.0 { (rj[i] - r0[i]) / dy } else { 0.0 };
            }
        }
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for i in 0..targets.len() {
            for a in 0..3 {
                jtr[a] -= jac[i][a] * r0[i];
                for b in 0..3 {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        let mut improved = false;
        while evaluations < budget && mu < 1e6 {
            let mut damped = jtj;
            for (a, row) in damped.iter_mut().enumerate() {
                row[a] += mu * jtj[a][a].max(1e-12);
            }
            let Some(step) = solve3(damped, jtr) else {
                mu *= 10.0;
                continue;
            };
            let trial = clamp([y[0] + step[0], y[1] + step[1], y[2] + step[2]]);
            let tp = model(&[trial])?;
            evaluations += 1;
            let te = rel_errors(&tp[0], targets);
            if max_abs(&te) < max_abs(&err) {
                x = trial;
                err = te;
                mu = (mu / 10.0).max(1e-9);
                improved = true;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let converged = max_abs(&err) <= opts.tolerance;
    Ok(Fit {
        x,
        errors: err,
        evaluations,
        converged,
    })
}

/// Runs each distinct anchor experiment once with `params` and measures
/// every anchor.
pub fn evaluate_anchors(anchors: &[Anchor], params: &CalibrationParams, seed: u64) -> Result<Vec<f64>> {
    let mut ids: Vec<u32> = anchors.iter().map(|a| a.experiment).collect();
    ids.sort_unstable();
    ids.dedup();
    let outputs = ids
        .par_iter()
        .map(|&id| {
            let config = experiment(id)?;
            let out = simulate(&config, params, 0, seed)?;
            Ok((id, config.run_length_s, out.samples))
        })
        .collect::<Result<Vec<_>>>()?;
    anchors
        .iter()
        .map(|a| {
            let (_, run_length, samples) = outputs
                .iter()
                .find(|(id, _, _)| *id == a.experiment)
                .expect("experiment evaluated");
            a.measure(samples, *run_length)
        })
        .collect()
}

fn distinct_experiments(anchors: &[Anchor]) -> u32 {
    let mut ids: Vec<u32> = anchors.iter().map(|a| a.experiment).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.len() as u32
}

/// Fits all parameters to `anchors`. Throughput anchors drive the joint fit;
/// a latency anchor, if present, sets the base one-way delay.
pub fn calibrate(anchors: &[Anchor], opts: &CalibrationOptions) -> Result<CalibrationParams> {
    let (latency, throughput): (Vec<&Anchor>, Vec<&Anchor>) =
        anchors.iter().partition(|a| a.metric == Metric::LatencyMs);
    let throughput: Vec<Anchor> = throughput.into_iter().cloned().collect();
    if throughput.is_empty() {
        return Err(Error::InvalidConfig("no throughput anchors".into()));
    }
    let targets: Vec<f64> = throughput.iter().map(|a| a.target).collect();
    let per_eval = distinct_experiments(&throughput);
    let reserve = 2 * latency.len() as u32;
    let budget = (opts.max_runs.saturating_sub(reserve) / per_eval) as usize;

    let base = CalibrationParams::default();
    let with = |x: &[f64; 3], delay: f64| CalibrationParams {
        cost_per_byte: x[0],
        cpu_capacity_cores: x[1],
        upf_max_cores: x[2],
        base_one_way_delay_s: delay,
        ..base.clone()
    };
    let placeholder_delay = 1e-9;
    let fitted = fit(&targets, opts, budget, |points| {
        points
            .par_iter()
            .map(|x| evaluate_anchors(&throughput, &with(x, placeholder_delay), opts.seed))
            .collect()
    })?;
    let mut runs = fitted.evaluations as u32 * per_eval;
    let mut params = with(&fitted.x, placeholder_delay);
    let mut converged = fitted.converged;

    let mut errors = Vec::with_capacity(anchors.len());
    let mut delay = None;
    for a in &latency {
        // measured with (near) zero base delay; the base adds twice to every RTT
        let m0 = evaluate_anchors(&[(*a).clone()], &params, opts.seed)?[0];
        runs += 1;
        let d = (a.target - m0) / 2.0 / 1000.0;
        if d > 0.0 {
            delay = Some(d);
        } else {
            converged = false;
        }
    }
    params.base_one_way_delay_s = delay.unwrap_or(base.base_one_way_delay_s);

    let lat_anchors: Vec<Anchor> = latency.iter().map(|a| (*a).clone()).collect();
    let lat_values = if lat_anchors.is_empty() {
        Vec::new()
    } else {
        runs += distinct_experiments(&lat_anchors);
        evaluate_anchors(&lat_anchors, &params, opts.seed)?
    };
    let (mut ti, mut li) = (0, 0);
    for a in anchors {
        if a.metric == Metric::LatencyMs {
            errors.push((lat_values[li] - a.target) / a.target);
            li += 1;
        } else {
            errors.push(fitted.errors[ti]);
            ti += 1;
        }
    }
    if max_abs(&errors) > opts.tolerance.max(0.01) {
        converged = false;
    }
    params.anchors = anchors.to_vec();
    params.errors = errors;
    params.converged = converged;
    params.runs = runs;
    Ok(params)
}
