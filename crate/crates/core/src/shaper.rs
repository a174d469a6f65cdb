//! Egress bandwidth control at UPF output.
//!
//! [`TbfState`] is a queueing token bucket whose departures additionally
//! pay a fixed redirection-hop delay. [`EdtState`] stamps each workload with
//! its earliest legal departure time and holds no queue of its own.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::sim::SimTime;
use crate::traffic::Workload;

/// Token shortfall, in bytes, treated as zero. Covers float error left after
/// waking at a release instant rounded up to whole nanoseconds.
const TOKEN_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShaperMode {
    #[default]
    None,
    Tbf,
    Edt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShaperConfig {
    pub mode: ShaperMode,
    /// Rate limit in Mbps; 0 means active but unlimited.
    pub rate_mbps: f64,
    pub bucket_bytes: u64,
    pub queue_capacity: usize,
    pub ifb_overhead_s: f64,
    /// Burst allowance of the EDT pacer in bytes. 0 paces every workload
    /// strictly; a positive value gives the pacer token-bucket conformance
    /// with that depth.
    pub edt_burst_bytes: u64,
}

impl Default for ShaperConfig {
    fn default() -> Self {
        ShaperConfig {
            mode: ShaperMode::None,
            rate_mbps: 0.0,
            bucket_bytes: 256 * 1024,
            queue_capacity: 10_000,
            ifb_overhead_s: 0.0002,
            edt_burst_bytes: 0,
        }
    }
}

impl ShaperConfig {
    pub fn edt(rate_mbps: f64) -> Self {
        ShaperConfig {
            mode: ShaperMode::Edt,
            rate_mbps,
            ..Default::default()
        }
    }

    pub fn tbf(rate_mbps: f64) -> Self {
        ShaperConfig {
            mode: ShaperMode::Tbf,
            rate_mbps,
            ..Default::default()
        }
    }

    pub fn rate_bps(&self) -> f64 {
        self.rate_mbps * 1e6
    }

    pub fn is_active(&self) -> bool {
        self.mode != ShaperMode::None
    }
}

/// Outcome of offering a workload to a shaper.
#[derive(Debug, PartialEq)]
pub enum Admit {
    /// The workload leaves the shaper at the given instant.
    Depart(Workload, SimTime),
    /// Held in the TBF queue until tokens accrue.
    Queued,
    Dropped(Workload),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShaperCounters {
    pub admitted: u64,
    pub departed: u64,
    pub dropped: u64,
}

#[derive(Debug)]
pub struct TbfState {
    rate_bps: f64,
    bucket: f64,
    capacity: usize,
    ifb: SimTime,
    tokens: f64,
    last_refill: SimTime,
    queue: VecDeque<Workload>,
    counters: ShaperCounters,
}

impl TbfState {
    /// Starts with a full bucket.
    pub fn new(cfg: &ShaperConfig, now: SimTime) -> Self {
        TbfState {
            rate_bps: cfg.rate_bps(),
            bucket: cfg.bucket_bytes as f64,
            capacity: cfg.queue_capacity,
            ifb: SimTime::from_secs_f64(cfg.ifb_overhead_s),
            tokens: cfg.bucket_bytes as f64,
            last_refill: now,
            queue: VecDeque::new(),
            counters: ShaperCounters::default(),
        }
    }

    pub fn tokens(&self) -> f64 {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.queue.len() >= self.capacity
    }

    pub fn counters(&self) -> ShaperCounters {
        self.counters
    }

    fn unlimited(&self) -> bool {
        self.rate_bps <= 0.0
    }

    fn refill(&mut self, t: SimTime) {
        if t > self.last_refill {
            let dt = (t - self.last_refill).as_secs_f64();
            self.tokens = (self.tokens + self.rate_bps / 8.0 * dt).min(self.bucket);
            self.last_refill = t;
        }
    }

    /// A workload larger than the bucket can never conform and is dropped.
    pub fn admit(&mut self, w: Workload, t: SimTime) -> Admit {
        self.counters.admitted += 1;
        if self.unlimited() {
            self.counters.departed += 1;
            return Admit::Depart(w, t + self.ifb);
        }
        self.refill(t);
        let size = f64::from(w.size);
        if size > self.bucket {
            self.counters.dropped += 1;
            return Admit::Dropped(w);
        }
        if self.queue.is_empty() && self.tokens + TOKEN_EPS >= size {
            self.tokens = (self.tokens - size).max(0.0);
            self.counters.departed += 1;
            return Admit::Depart(w, t + self.ifb);
        }
        if self.is_full() {
            self.counters.dropped += 1;
            return Admit::Dropped(w);
        }
        self.queue.push_back(w);
        Admit::Queued
    }

    /// When the head of the queue will have enough tokens.
    pub fn next_release(&self) -> Option<SimTime> {
        let head = self.queue.front()?;
        let missing = f64::from(head.size) - self.tokens;
        if missing <= TOKEN_EPS {
            return Some(self.last_refill);
        }
        Some(self.last_refill + SimTime::from_secs_f64_ceil(missing * 8.0 / self.rate_bps))
    }

    /// Releases every queued workload that conforms at `t`, each departing
    /// after the redirection-hop delay.
    pub fn release(&mut self, t: SimTime, out: &mut Vec<(Workload, SimTime)>) {
        self.refill(t);
        while let Some(head) = self.queue.front() {
            let size = f64::from(head.size);
            if self.tokens + TOKEN_EPS < size {
                break;
            }
            self.tokens = (self.tokens - size).max(0.0);
            let w = self.queue.pop_front().expect("non-empty");
            self.counters.departed += 1;
            out.push((w, t + self.ifb));
        }
    }

    pub fn queued(&self) -> impl Iterator<Item = &Workload> {
        self.queue.iter()
    }
}

#[derive(Debug)]
pub struct EdtState {
    rate_bps: f64,
    burst: f64,
    capacity: usize,
    next_departure: SimTime,
    /// Instant at which the virtual bucket was last empty, seconds; `None`
    /// while it has never been drawn down.
    virtual_empty: Option<f64>,
    pending: usize,
    counters: ShaperCounters,
}

impl EdtState {
    pub fn new(cfg: &ShaperConfig) -> Self {
        EdtState {
            rate_bps: cfg.rate_bps(),
            burst: cfg.edt_burst_bytes as f64,
            capacity: cfg.queue_capacity,
            next_departure: SimTime::ZERO,
            virtual_empty: None,
            pending: 0,
            counters: ShaperCounters::default(),
        }
    }

    pub fn next_departure(&self) -> SimTime {
        self.next_departure
    }

    /// Workloads stamped but not yet departed.
    pub fn pending(&self) -> usize {
        self.pending
    }

    pub fn is_full(&self) -> bool {
        self.pending >= self.capacity
    }

    pub fn counters(&self) -> ShaperCounters {
        self.counters
    }

    pub fn admit(&mut self, w: Workload, t: SimTime) -> Admit {
        self.counters.admitted += 1;
        if self.is_full() {
            self.counters.dropped += 1;
            return Admit::Dropped(w);
        }
        let departure = self.stamp(w.size, t);
        self.pending += 1;
        Admit::Depart(w, departure)
    }

    fn stamp(&mut self, size: u32, t: SimTime) -> SimTime {
        if self.rate_bps <= 0.0 {
            return t;
        }
        let tx = f64::from(size) * 8.0 / self.rate_bps;
        if self.burst <= 0.0 {
            let departure = t.max(self.next_departure);
            self.next_departure = departure + SimTime::from_secs_f64_ceil(tx);
            return departure;
        }
        // Token bucket of depth `burst` expressed in time: tokens at instant
        // x are min(burst, rate * (x - virtual_empty)).
        let depth = self.burst * 8.0 / self.rate_bps;
        let ts = t.as_secs_f64();
        let empty = self.virtual_empty.unwrap_or(ts - depth);
        let earliest = SimTime::from_secs_f64_ceil(empty + tx);
        let departure = t.max(self.next_departure).max(earliest);
        let ds = departure.as_secs_f64();
        self.virtual_empty = Some(empty.max(ds - depth) + tx);
        self.next_departure = departure;
        departure
    }

    /// Must be called when a stamped workload leaves.
    pub fn on_departure(&mut self) {
        debug_assert!(self.pending > 0);
        self.pending -= 1;
        self.counters.departed += 1;
    }
}

/// Per-UPF egress stage.
#[derive(Debug)]
pub enum Shaper {
    Passthrough,
    Tbf(TbfState),
    Edt(EdtState),
}

impl Shaper {
    pub fn new(cfg: &ShaperConfig, now: SimTime) -> Self {
        match cfg.mode {
            ShaperMode::None => Shaper::Passthrough,
            ShaperMode::Tbf => Shaper::Tbf(TbfState::new(cfg, now)),
            ShaperMode::Edt => Shaper::Edt(EdtState::new(cfg)),
        }
    }

    pub fn admit(&mut self, w: Workload, t: SimTime) -> Admit {
        match self {
            Shaper::Passthrough => Admit::Depart(w, t),
            Shaper::Tbf(s) => s.admit(w, t),
            Shaper::Edt(s) => s.admit(w, t),
        }
    }

    pub fn is_full(&self) -> bool {
        match self {
            Shaper::Passthrough => false,
            Shaper::Tbf(s) => s.is_full(),
            Shaper::Edt(s) => s.is_full(),
        }
    }

    /// Notifies the shaper that a workload it stamped has left.
    pub fn on_departure(&mut self) {
        if let Shaper::Edt(s) = self {
            s.on_departure();
        }
    }

    pub fn counters(&self) -> ShaperCounters {
        match self {
            Shaper::Passthrough => ShaperCounters::default(),
            Shaper::Tbf(s) => s.counters(),
            Shaper::Edt(s) => s.counters(),
        }
    }
}

/// Departure instant of every arrival through a standalone shaper, `None`
/// for drops. Arrivals must be sorted by time.
pub fn shape_trace(cfg: &ShaperConfig, arrivals: &[(SimTime, u32)]) -> Vec<Option<SimTime>> {
    let start = arrivals.first().map_or(SimTime::ZERO, |a| a.0);
    let mut result = vec![None; arrivals.len()];
    match cfg.mode {
        ShaperMode::None => {
            for (r, &(t, _)) in result.iter_mut().zip(arrivals) {
                *r = Some(t);
            }
        }
        ShaperMode::Tbf => {
            let mut tbf = TbfState::new(cfg, start);
            let mut released = Vec::new();
            let mut index_of_queued = VecDeque::new();
            let mut drain = |tbf: &mut TbfState, upto: SimTime, queued: &mut VecDeque<usize>, result: &mut Vec<Option<SimTime>>| {
                while let Some(at) = tbf.next_release().filter(|&at| at <= upto) {
                    released.clear();
                    tbf.release(at, &mut released);
                    for (_, dep) in released.drain(..) {
                        result[queued.pop_front().expect("released one queued")] = Some(dep);
                    }
                }
            };
            for (i, &(t, size)) in arrivals.iter().enumerate() {
                drain(&mut tbf, t, &mut index_of_queued, &mut result);
                match tbf.admit(trace_workload(size, t), t) {
                    Admit::Depart(_, dep) => result[i] = Some(dep),
                    Admit::Queued => index_of_queued.push_back(i),
                    Admit::Dropped(_) => {}
                }
            }
            drain(&mut tbf, SimTime::MAX, &mut index_of_queued, &mut result);
        }
        ShaperMode::Edt => {
            let mut edt = EdtState::new(cfg);
            let mut in_flight: VecDeque<SimTime> = VecDeque::new();
            for (i, &(t, size)) in arrivals.iter().enumerate() {
                while in_flight.front().is_some_and(|&d| d <= t) {
                    in_flight.pop_front();
                    edt.on_departure();
                }
                if let Admit::Depart(_, dep) = edt.admit(trace_workload(size, t), t) {
                    in_flight.push_back(dep);
                    result[i] = Some(dep);
                }
            }
        }
    }
    result
}

fn trace_workload(size: u32, t: SimTime) -> Workload {
    Workload::data(crate::traffic::SliceId(1), 0, size, t)
}

/// Mean shaping delay in seconds of TBF and of EDT over the same trace, at
/// the same rate and burst. Dropped workloads are excluded.
pub fn shaper_latency_compare(arrivals: &[(SimTime, u32)], cfg: &ShaperConfig) -> (f64, f64) {
    let tbf = ShaperConfig {
        mode: ShaperMode::Tbf,
        ..cfg.clone()
    };
    let edt = ShaperConfig {
        mode: ShaperMode::Edt,
        edt_burst_bytes: cfg.bucket_bytes,
        ..cfg.clone()
    };
    let mean_delay = |deps: Vec<Option<SimTime>>| {
        let delays: Vec<f64> = deps
            .iter()
            .zip(arrivals)
            .filter_map(|(d, &(t, _))| d.map(|d| (d - t).as_secs_f64()))
            .collect();
        if delays.is_empty() {
            0.0
        } else {
            delays.iter().sum::<f64>() / delays.len() as f64
        }
    };
    (mean_delay(shape_trace(&tbf, arrivals)), mean_delay(shape_trace(&edt, arrivals)))
}
