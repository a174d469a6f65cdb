//! The edge node's CPU: weighted processor sharing between UPF processes,
//! with nice-derived weights and cgroup-style quota throttling.
//!
//! The scheduler is fluid. Every runnable UPF drains its head-of-line
//! workload continuously at a rate (in cores) given by water-filling the
//! node capacity over the runnable set in proportion to the nice
//! timeslices, with each UPF additionally capped at `upf_max_cores`.
//! Quota-limited UPFs stop once their per-period budget is spent and resume
//! at the next period boundary.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::SimTime;
use crate::traffic::Workload;

/// Work below this many cpu-seconds counts as finished; it absorbs the
/// rounding of completion instants up to whole nanoseconds.
const WORK_EPS: f64 = 1e-12;

/// Linux nice value in `[-20, 19]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct NiceValue(i8);

impl NiceValue {
    pub fn new(value: i32) -> Result<Self> {
        if (-20..=19).contains(&value) {
            Ok(NiceValue(value as i8))
        } else {
            Err(Error::NiceOutOfRange(value))
        }
    }

    pub fn get(self) -> i32 {
        i32::from(self.0)
    }
}

impl TryFrom<i32> for NiceValue {
    type Error = Error;
    fn try_from(value: i32) -> Result<Self> {
        NiceValue::new(value)
    }
}

impl From<NiceValue> for i32 {
    fn from(n: NiceValue) -> i32 {
        n.get()
    }
}

/// Timeslice in milliseconds, interpolated linearly through
/// `-20 -> 800`, `0 -> 100` and `19 -> 5`.
pub fn nice_to_timeslice(n: NiceValue) -> f64 {
    let v = f64::from(n.get());
    if v <= 0.0 {
        100.0 + (-v / 20.0) * 700.0
    } else {
        100.0 - (v / 19.0) * 95.0
    }
}

/// CPU share of each task: its timeslice over the sum of all timeslices.
pub fn cpu_fractions(tasks: &[NiceValue]) -> Result<Vec<f64>> {
    if tasks.is_empty() {
        return Err(Error::EmptyTaskList);
    }
    let slices: Vec<f64> = tasks.iter().map(|&n| nice_to_timeslice(n)).collect();
    let total: f64 = slices.iter().sum();
    Ok(slices.into_iter().map(|s| s / total).collect())
}

/// CFS bandwidth-control quota for one UPF.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpuQuota {
    pub limit_millicpu: u32,
    pub period: SimTime,
}

impl CpuQuota {
    pub const DEFAULT_PERIOD: SimTime = SimTime::from_millis(100);

    /// `None` for a zero (unlimited) limit.
    pub fn new(limit_millicpu: u32) -> Option<Self> {
        (limit_millicpu > 0).then_some(CpuQuota {
            limit_millicpu,
            period: Self::DEFAULT_PERIOD,
        })
    }

    /// CPU-seconds available per period.
    pub fn budget(&self) -> f64 {
        f64::from(self.limit_millicpu) / 1000.0 * self.period.as_secs_f64()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpuNodeConfig {
    pub capacity_cores: f64,
    /// Ceiling on what a single UPF process can use.
    pub upf_max_cores: f64,
    pub cost_per_byte: f64,
    /// Drop-tail bound on bytes waiting at each UPF (0 = unbounded).
    pub queue_bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpfSpec {
    pub nice: NiceValue,
    pub quota: Option<CpuQuota>,
    /// Extra cpu-seconds charged per workload (shaper surcharge).
    pub per_workload_cpu_s: f64,
}

#[derive(Debug)]
struct UpfState {
    spec: UpfSpec,
    weight: f64,
    queue: VecDeque<Workload>,
    queued_bytes: u64,
    head_remaining: f64,
    rate: f64,
    budget_used: f64,
    throttled: bool,
    blocked: bool,
    cpu_time: f64,
    dropped: u64,
    period_runtimes: Vec<f64>,
}

impl UpfState {
    fn runnable(&self) -> bool {
        !self.queue.is_empty() && !self.throttled && !self.blocked && self.head_remaining > WORK_EPS
    }

    fn budget_left(&self) -> f64 {
        match self.spec.quota {
            Some(q) => (q.budget() - self.budget_used).max(0.0),
            None => f64::INFINITY,
        }
    }
}

/// Fluid CPU shared by one UPF per slice.
#[derive(Debug)]
pub struct CpuNode {
    cfg: CpuNodeConfig,
    upfs: Vec<UpfState>,
    last: SimTime,
}

impl CpuNode {
    pub fn new(cfg: CpuNodeConfig, specs: Vec<UpfSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::EmptyTaskList);
        }
        for (name, v) in [
            ("capacity_cores", cfg.capacity_cores),
            ("upf_max_cores", cfg.upf_max_cores),
            ("cost_per_byte", cfg.cost_per_byte),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        let upfs = specs
            .into_iter()
            .map(|spec| UpfState {
                weight: nice_to_timeslice(spec.nice),
                spec,
                queue: VecDeque::new(),
                queued_bytes: 0,
                head_remaining: 0.0,
                rate: 0.0,
                budget_used: 0.0,
                throttled: false,
                blocked: false,
                cpu_time: 0.0,
                dropped: 0,
                period_runtimes: Vec::new(),
            })
            .collect();
        Ok(CpuNode {
            cfg,
            upfs,
            last: SimTime::ZERO,
        })
    }

    pub fn config(&self) -> &CpuNodeConfig {
        &self.cfg
    }

    pub fn upf_count(&self) -> usize {
        self.upfs.len()
    }

    pub fn quota(&self, upf: usize) -> Option<CpuQuota> {
        self.upfs[upf].spec.quota
    }

    /// Current service rate of `upf`, in cores.
    pub fn rate(&self, upf: usize) -> f64 {
        self.upfs[upf].rate
    }

    pub fn total_rate(&self) -> f64 {
        self.upfs.iter().map(|u| u.rate).sum()
    }

    pub fn is_runnable(&self, upf: usize) -> bool {
        self.upfs[upf].runnable()
    }

    pub fn is_throttled(&self, upf: usize) -> bool {
        self.upfs[upf].throttled
    }

    pub fn is_blocked(&self, upf: usize) -> bool {
        self.upfs[upf].blocked
    }

    /// CPU-seconds consumed by `upf` up to the last update.
    pub fn cpu_time(&self, upf: usize) -> f64 {
        self.upfs[upf].cpu_time
    }

    pub fn queue_len(&self, upf: usize) -> usize {
        self.upfs[upf].queue.len()
    }

    pub fn queued_bytes(&self, upf: usize) -> u64 {
        self.upfs[upf].queued_bytes
    }

    /// Workloads refused because the UPF queue was full.
    pub fn dropped(&self, upf: usize) -> u64 {
        self.upfs[upf].dropped
    }

    /// Runtime of each completed quota period, cpu-seconds.
    pub fn period_runtimes(&self, upf: usize) -> &[f64] {
        &self.upfs[upf].period_runtimes
    }

    /// Iterates over the workloads still held by `upf`, head first.
    pub fn queued(&self, upf: usize) -> impl Iterator<Item = &Workload> {
        self.upfs[upf].queue.iter()
    }

    /// Offers a workload to `upf`. Returns `false` if it was dropped.
    pub fn enqueue(&mut self, upf: usize, w: Workload, now: SimTime) -> bool {
        self.advance(now);
        let limit = self.cfg.queue_bytes;
        let cost = self.cfg.cost_per_byte;
        let u = &mut self.upfs[upf];
        let size = u64::from(w.size);
        if limit > 0 && u.queued_bytes + size > limit {
            u.dropped += 1;
            return false;
        }
        if u.queue.is_empty() {
            u.head_remaining = f64::from(w.size) * cost + u.spec.per_workload_cpu_s;
        }
        u.queued_bytes += size;
        u.queue.push_back(w);
        self.recompute_rates();
        true
    }

    /// Earliest instant at which some head workload finishes or some quota
    /// budget runs out, given current rates.
    pub fn next_event(&self) -> Option<SimTime> {
        self.upfs
            .iter()
            .filter(|u| u.rate > 0.0)
            .map(|u| {
                let work = u.head_remaining.min(u.budget_left());
                self.last + SimTime::from_secs_f64_ceil(work / u.rate)
            })
            .min()
    }

    /// Advances to `now` and moves every finished head workload into `out`,
    /// in UPF order, stamping `cpu_done_at`.
    pub fn complete(&mut self, now: SimTime, out: &mut Vec<(usize, Workload)>) {
        self.advance(now);
        let cost = self.cfg.cost_per_byte;
        for (i, u) in self.upfs.iter_mut().enumerate() {
            while !u.queue.is_empty() && u.head_remaining <= WORK_EPS {
                let mut w = u.queue.pop_front().expect("non-empty");
                u.queued_bytes -= u64::from(w.size);
                w.cpu_done_at = Some(now);
                out.push((i, w));
                u.head_remaining = match u.queue.front() {
                    Some(next) => f64::from(next.size) * cost + u.spec.per_workload_cpu_s,
                    None => 0.0,
                };
            }
        }
        self.recompute_rates();
    }

    /// Starts a new quota period for `upf`.
    pub fn period_boundary(&mut self, upf: usize, now: SimTime) {
        self.advance(now);
        let u = &mut self.upfs[upf];
        u.period_runtimes.push(u.budget_used);
        u.budget_used = 0.0;
        u.throttled = false;
        self.recompute_rates();
    }

    /// Stalls or resumes `upf` (egress backpressure).
    pub fn set_blocked(&mut self, upf: usize, blocked: bool, now: SimTime) {
        if self.upfs[upf].blocked == blocked {
            return;
        }
        self.advance(now);
        self.upfs[upf].blocked = blocked;
        self.recompute_rates();
    }

    /// Accrues service for the time elapsed since the last update.
    pub fn advance(&mut self, now: SimTime) {
        debug_assert!(now >= self.last);
        let dt = now.saturating_sub(self.last).as_secs_f64();
        self.last = self.last.max(now);
        if dt == 0.0 {
            return;
        }
        for u in &mut self.upfs {
            if u.rate <= 0.0 {
                continue;
            }
            let used = (u.rate * dt).min(u.head_remaining).min(u.budget_left());
            u.head_remaining -= used;
            u.cpu_time += used;
            if u.head_remaining <= WORK_EPS {
                u.head_remaining = 0.0;
            }
            if let Some(q) = u.spec.quota {
                u.budget_used += used;
                if q.budget() - u.budget_used <= WORK_EPS {
                    u.budget_used = q.budget();
                    u.throttled = true;
                }
            }
        }
    }

    /// Water-fills capacity over runnable UPFs in proportion to weight,
    /// respecting the per-UPF ceiling.
    fn recompute_rates(&mut self) {
        let ceiling = self.cfg.upf_max_cores.min(self.cfg.capacity_cores);
        let mut free: Vec<usize> = Vec::with_capacity(self.upfs.len());
        for (i, u) in self.upfs.iter_mut().enumerate() {
            u.rate = 0.0;
            if u.runnable() {
                free.push(i);
            }
        }
        let mut capacity = self.cfg.capacity_cores;
        loop {
            let total_weight: f64 = free.iter().map(|&i| self.upfs[i].weight).sum();
            if free.is_empty() || total_weight <= 0.0 {
                return;
            }
            let lambda = capacity / total_weight;
            let before = free.len();
            free.retain(|&i| {
                if lambda * self.upfs[i].weight >= ceiling {
                    self.upfs[i].rate = ceiling;
                    capacity -= ceiling;
                    false
                } else {
                    true
                }
            });
            if free.len() == before {
                for &i in &free {
                    self.upfs[i].rate = lambda * self.upfs[i].weight;
                }
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::SliceId;

    fn nice(v: i32) -> NiceValue {
        NiceValue::new(v).unwrap()
    }

    fn node(capacity: f64, ceiling: f64, specs: Vec<UpfSpec>) -> CpuNode {
        let cfg = CpuNodeConfig {
            capacity_cores: capacity,
            upf_max_cores: ceiling,
            cost_per_byte: 1e-8,
            queue_bytes: 0,
        };
        CpuNode::new(cfg, specs).unwrap()
    }

    fn frame(slice: u8) -> Workload {
        Workload::data(SliceId(slice), 0, 93_750, SimTime::ZERO)
    }

    /// Drives the node until `end`, keeping every UPF backlogged.
    fn run_saturated(cpu: &mut CpuNode, end: SimTime) -> Vec<u64> {
        let n = cpu.upf_count();
        let mut done = vec![0u64; n];
        let mut periods: Vec<Option<SimTime>> = (0..n)
            .map(|i| cpu.quota(i).map(|q| q.period))
            .collect();
        for i in 0..n {
            for _ in 0..4 {
                cpu.enqueue(i, frame(i as u8 + 1), SimTime::ZERO);
            }
        }
        let mut out = Vec::new();
        loop {
            let next_cpu = cpu.next_event().unwrap_or(SimTime::MAX);
            let next_period = periods.iter().flatten().copied().min().unwrap_or(SimTime::MAX);
            let t = next_cpu.min(next_period);
            if t > end {
                cpu.advance(end);
                return done;
            }
            if t == next_period {
                for i in 0..n {
                    if periods[i] == Some(t) {
                        cpu.period_boundary(i, t);
                        periods[i] = Some(t + cpu.quota(i).unwrap().period);
                    }
                }
            }
            out.clear();
            cpu.complete(t, &mut out);
            for (i, w) in out.drain(..) {
                done[i] += 1;
                cpu.enqueue(i, Workload::data(w.slice, 0, w.size, t), t);
            }
        }
    }

    #[test]
    fn timeslice_anchors() {
        assert_eq!(nice_to_timeslice(nice(-20)), 800.0);
        assert_eq!(nice_to_timeslice(nice(0)), 100.0);
        assert_eq!(nice_to_timeslice(nice(19)), 5.0);
        assert_eq!(nice_to_timeslice(nice(-5)), 275.0);
        assert_eq!(nice_to_timeslice(nice(5)), 75.0);
        assert!(matches!(NiceValue::new(20), Err(Error::NiceOutOfRange(20))));
        assert!(NiceValue::new(-21).is_err());
    }

    #[test]
    fn timeslice_strictly_decreasing() {
        for v in -20..19 {
            assert!(nice_to_timeslice(nice(v)) > nice_to_timeslice(nice(v + 1)));
        }
    }

    #[test]
    fn fractions_examples() {
        assert_eq!(cpu_fractions(&[nice(0), nice(0)]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(cpu_fractions(&[nice(-5)]).unwrap(), vec![1.0]);
        let f = cpu_fractions(&[nice(-5), nice(5), nice(5), nice(5), nice(5)]).unwrap();
        assert!((f[0] - 275.0 / 575.0).abs() < 1e-15);
        for x in &f[1..] {
            assert!((x - 75.0 / 575.0).abs() < 1e-15);
        }
        assert!(matches!(cpu_fractions(&[]), Err(Error::EmptyTaskList)));
    }

    #[test]
    fn nice_serde_rejects_out_of_range() {
        assert_eq!(serde_json::from_str::<NiceValue>("-5").unwrap(), nice(-5));
        assert!(serde_json::from_str::<NiceValue>("25").is_err());
    }

    #[test]
    fn uncontended_service_time() {
        let mut cpu = node(2.0, 10.0, vec![UpfSpec::default()]);
        cpu.enqueue(0, frame(1), SimTime::ZERO);
        // 93750 B * 1e-8 s/B on 2 cores
        let expected = SimTime::from_secs_f64_ceil(93_750.0 * 1e-8 / 2.0);
        assert_eq!(cpu.next_event(), Some(expected));
        let mut out = Vec::new();
        cpu.complete(expected, &mut out);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].1.cpu_done_at, Some(expected));
        assert_eq!(cpu.total_rate(), 0.0);
    }

    #[test]
    fn per_upf_ceiling_limits_a_lone_upf() {
        let mut cpu = node(2.7, 0.7, vec![UpfSpec::default(); 5]);
        cpu.enqueue(0, frame(1), SimTime::ZERO);
        assert_eq!(cpu.rate(0), 0.7);
    }

    #[test]
    fn water_filling_redistributes_capped_share() {
        // weights 275 and 4 x 75; capacity 2.7 would give slice 1 1.29 cores
        let specs = std::iter::once(-5)
            .chain([5; 4])
            .map(|n| UpfSpec {
                nice: nice(n),
                ..Default::default()
            })
            .collect();
        let mut cpu = node(2.7, 0.7, specs);
        for i in 0..5 {
            cpu.enqueue(i, frame(i as u8 + 1), SimTime::ZERO);
        }
        assert_eq!(cpu.rate(0), 0.7);
        for i in 1..5 {
            assert!((cpu.rate(i) - 0.5).abs() < 1e-12);
        }
        assert!((cpu.total_rate() - 2.7).abs() < 1e-12);
    }

    #[test]
    fn equal_nice_shares_capacity_evenly() {
        let mut cpu = node(2.0, 10.0, vec![UpfSpec::default(); 5]);
        run_saturated(&mut cpu, SimTime::from_secs(10));
        for i in 0..5 {
            assert!((cpu.cpu_time(i) - 4.0).abs() < 1e-6, "{}", cpu.cpu_time(i));
        }
    }

    /// Round-robin over timeslices on one core: the discrete counterpart of
    /// the fluid weighted share.
    fn round_robin_shares(nices: &[i32], horizon_ms: f64) -> Vec<f64> {
        let slices: Vec<f64> = nices.iter().map(|&n| nice_to_timeslice(nice(n))).collect();
        let mut used = vec![0.0; nices.len()];
        let mut t = 0.0;
        'outer: loop {
            for (i, s) in slices.iter().enumerate() {
                let run = s.min(horizon_ms - t);
                used[i] += run;
                t += run;
                if t >= horizon_ms {
                    break 'outer;
                }
            }
        }
        used.iter().map(|u| u / horizon_ms).collect()
    }

    #[test]
    fn fluid_shares_match_round_robin_oracle() {
        let nices = [-5, 5, 5, 5, 5];
        let specs = nices
            .iter()
            .map(|&n| UpfSpec {
                nice: nice(n),
                ..Default::default()
            })
            .collect();
        let mut cpu = node(1.0, 1.0, specs);
        run_saturated(&mut cpu, SimTime::from_secs(60));
        // 60 s is a whole number of 575 ms rounds plus a partial one
        let oracle = round_robin_shares(&nices, 60_000.0);
        for (i, share) in oracle.iter().enumerate() {
            let fluid = cpu.cpu_time(i) / 60.0;
            assert!((fluid - share).abs() < 5e-3, "upf {i}: fluid {fluid} rr {share}");
        }
    }

    /// Slotted-time quota oracle: 1 ms slots, each granting
    /// `min(rate * 1 ms, budget left)`.
    fn slotted_quota_runtimes(rate: f64, quota: CpuQuota, periods: usize) -> Vec<f64> {
        let slots = (quota.period.as_secs_f64() / 1e-3).round() as usize;
        (0..periods)
            .map(|_| {
                let mut used = 0.0;
                for _ in 0..slots {
                    used += (rate * 1e-3).min(quota.budget() - used);
                }
                used
            })
            .collect()
    }

    #[test]
    fn quota_runtime_matches_slotted_oracle() {
        let quota = CpuQuota::new(250).unwrap();
        let mut cpu = node(
            2.7,
            0.7,
            vec![UpfSpec {
                quota: Some(quota),
                ..Default::default()
            }],
        );
        run_saturated(&mut cpu, SimTime::from_secs(60));
        let oracle = slotted_quota_runtimes(0.7, quota, 600);
        let fluid = cpu.period_runtimes(0);
        assert_eq!(fluid.len(), 600);
        for (f, o) in fluid.iter().zip(&oracle) {
            assert!((f - o).abs() < 1e-9, "fluid {f} slotted {o}");
            assert!(*f <= quota.budget() + 1e-12);
        }
        // two consecutive saturated periods use exactly twice the budget
        assert!((fluid[3] + fluid[4] - 2.0 * 0.025).abs() < 1e-12);
    }

    #[test]
    fn exhausted_budget_idles_until_period_end() {
        let quota = CpuQuota::new(250).unwrap();
        let mut cpu = node(
            1.0,
            1.0,
            vec![UpfSpec {
                quota: Some(quota),
                ..Default::default()
            }],
        );
        for _ in 0..40 {
            cpu.enqueue(0, frame(1), SimTime::ZERO);
        }
        // at 1 core the 25 ms budget runs out 25 ms into the period
        let mut t = SimTime::ZERO;
        let mut out = Vec::new();
        while !cpu.is_throttled(0) {
            t = cpu.next_event().unwrap();
            cpu.complete(t, &mut out);
        }
        // each completion rounds up to the next ns
        let late = t - SimTime::from_millis(25);
        assert!(late <= SimTime::from_nanos(40), "{t}");
        assert_eq!(cpu.rate(0), 0.0);
        assert_eq!(cpu.next_event(), None);
        cpu.period_boundary(0, SimTime::from_millis(100));
        assert_eq!(cpu.rate(0), 1.0);
    }

    #[test]
    fn quota_throughput_cap() {
        let quota = CpuQuota::new(250).unwrap();
        let mut cpu = node(
            2.7,
            0.7,
            vec![UpfSpec {
                quota: Some(quota),
                ..Default::default()
            }],
        );
        let done = run_saturated(&mut cpu, SimTime::from_secs(60));
        let rate = done[0] as f64 * 93_750.0 / 60.0;
        let cap = 0.25 / 1e-8;
        assert!(rate <= cap * 1.0001 && rate >= cap * 0.99, "{rate} vs {cap}");
    }

    #[test]
    fn bounded_queue_drops_excess() {
        let cfg = CpuNodeConfig {
            capacity_cores: 1.0,
            upf_max_cores: 1.0,
            cost_per_byte: 1e-8,
            queue_bytes: 200_000,
        };
        let mut cpu = CpuNode::new(cfg, vec![UpfSpec::default()]).unwrap();
        assert!(cpu.enqueue(0, frame(1), SimTime::ZERO));
        assert!(cpu.enqueue(0, frame(1), SimTime::ZERO));
        assert!(!cpu.enqueue(0, frame(1), SimTime::ZERO));
        assert_eq!(cpu.dropped(0), 1);
        assert_eq!(cpu.queued_bytes(0), 187_500);
    }

    #[test]
    fn blocked_upf_yields_cpu() {
        let mut cpu = node(1.0, 1.0, vec![UpfSpec::default(); 2]);
        cpu.enqueue(0, frame(1), SimTime::ZERO);
        cpu.enqueue(1, frame(2), SimTime::ZERO);
        assert_eq!(cpu.rate(0), 0.5);
        cpu.set_blocked(1, true, SimTime::ZERO);
        assert_eq!(cpu.rate(0), 1.0);
        assert_eq!(cpu.rate(1), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fractions_sum_to_one(values in prop::collection::vec(-20i32..=19, 1..12)) {
                let tasks: Vec<_> = values.iter().map(|&v| nice(v)).collect();
                let f = cpu_fractions(&tasks).unwrap();
                let total: f64 = tasks.iter().map(|&n| nice_to_timeslice(n)).sum();
                prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for (x, n) in f.iter().zip(&tasks) {
                    prop_assert!((x - nice_to_timeslice(*n) / total).abs() < 1e-15);
                }
            }

            // Rates never exceed capacity or the ceiling, and the CPU is
            // busy up to min(capacity, runnable * ceiling).
            #[test]
            fn water_filling_is_work_conserving(
                nices in prop::collection::vec(-20i32..=19, 1..6),
                backlogged in prop::collection::vec(any::<bool>(), 6),
                capacity in 0.5f64..4.0,
                ceiling in 0.2f64..2.0,
            ) {
                let specs = nices.iter().map(|&n| UpfSpec { nice: nice(n), ..Default::default() }).collect();
                let mut cpu = node(capacity, ceiling, specs);
                let mut runnable = 0;
                for i in 0..nices.len() {
                    if backlogged[i] {
                        cpu.enqueue(i, frame(1), SimTime::ZERO);
                        runnable += 1;
                    }
                }
                let c = ceiling.min(capacity);
                let expected = capacity.min(runnable as f64 * c);
                prop_assert!((cpu.total_rate() - expected).abs() < 1e-9);
                for i in 0..nices.len() {
                    prop_assert!(cpu.rate(i) <= c + 1e-12);
                }
            }

            // Lowering one UPF's nice never lowers its share.
            #[test]
            fn share_monotone_in_nice(
                others in prop::collection::vec(-20i32..=19, 1..5),
                mine in -19i32..=19,
                capacity in 0.5f64..4.0,
                ceiling in 0.2f64..2.0,
            ) {
                let share = |n: i32| {
                    let specs = std::iter::once(n).chain(others.iter().copied())
                        .map(|v| UpfSpec { nice: nice(v), ..Default::default() })
                        .collect();
                    let mut cpu = node(capacity, ceiling, specs);
                    for i in 0..=others.len() {
                        cpu.enqueue(i, frame(1), SimTime::ZERO);
                    }
                    cpu.rate(0)
                };
                prop_assert!(share(mine - 1) >= share(mine) - 1e-12);
            }
        }
    }
}
