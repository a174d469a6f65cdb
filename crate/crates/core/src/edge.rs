//! One simulation run of the edge node: UEs feed per-slice UPFs sharing the
//! CPU, each UPF's egress passes its shaper, and everything funnels into the
//! shared link to the server. Ping echoes return over the opposite direction
//! of the link.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cpu::{CpuNode, CpuNodeConfig, CpuQuota, UpfSpec};
use crate::error::Result;
use crate::experiments::calibrate::CalibrationParams;
use crate::experiments::config::ExperimentConfig;
use crate::link::{SharedLink, Transmit};
use crate::metrics::{Metric, MetricSample, ThroughputBins};
use crate::shaper::{Admit, Shaper};
use crate::sim::{EventHandle, EventKind, RngStream, Scheduler, SimTime};
use crate::traffic::{self, SliceId, TrafficProfile, UeRampSchedule, Workload, WorkloadKind};

/// Fractional parts of multiples of these spread probe send times over a
/// frame interval, so probes do not lock onto the frame phase.
const PHI_K: f64 = 0.618_033_988_749_895;
const PHI_UE: f64 = 0.754_877_666_246_693;

#[derive(Debug)]
enum Ev {
    UeStart { slice: u8, ue: u32, at: SimTime },
    Frame { slice: u8, ue: u32, k: u64, activation: SimTime },
    Ping { slice: u8, ue: u32, k: u64, activation: SimTime },
    Cpu,
    Quota { upf: usize },
    TbfRelease { upf: usize },
    ShaperOut { w: Workload },
    LinkOut { w: Workload, arrival: SimTime },
    Tick { k: usize },
    End,
}

/// End-of-run accounting for one slice. Data workload counts satisfy
/// `generated = delivered + dropped_* + resident_*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceAudit {
    pub slice: SliceId,
    pub generated: u64,
    pub generated_bytes: u64,
    pub delivered: u64,
    pub delivered_bytes: u64,
    pub dropped_upf: u64,
    pub dropped_shaper: u64,
    pub dropped_link: u64,
    pub resident_upf: u64,
    pub resident_shaper: u64,
    pub resident_link: u64,
    pub probes_sent: u64,
    pub probes_answered: u64,
    pub probes_lost: u64,
    pub probes_timed_out: u64,
    pub probes_unresolved: u64,
    pub cpu_seconds: f64,
    /// Largest runtime in any quota period, for quota-limited UPFs.
    pub max_period_runtime_s: Option<f64>,
}

impl SliceAudit {
    pub fn dropped(&self) -> u64 {
        self.dropped_upf + self.dropped_shaper + self.dropped_link
    }

    pub fn resident(&self) -> u64 {
        self.resident_upf + self.resident_shaper + self.resident_link
    }

    pub fn is_balanced(&self) -> bool {
        self.generated == self.delivered + self.dropped() + self.resident()
            && self.probes_sent
                == self.probes_answered + self.probes_lost + self.probes_timed_out + self.probes_unresolved
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunAudit {
    pub experiment: u32,
    pub run: u32,
    pub seed: u64,
    pub events: u64,
    pub slices: Vec<SliceAudit>,
}

impl RunAudit {
    pub fn is_balanced(&self) -> bool {
        self.slices.iter().all(SliceAudit::is_balanced)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub samples: Vec<MetricSample>,
    pub audit: RunAudit,
}

/// Per-slice pipeline counters that are not owned by a component.
#[derive(Default)]
struct Counters {
    generated: u64,
    generated_bytes: u64,
    delivered: u64,
    delivered_bytes: u64,
    dropped_upf: u64,
    dropped_shaper: u64,
    dropped_link: u64,
    in_shaper: u64,
    in_link: u64,
    probes_sent: u64,
    probes_answered: u64,
    probes_lost: u64,
    probes_timed_out: u64,
}

pub struct EdgeSimulation {
    experiment: u32,
    run: u32,
    seed: u64,
    slices: usize,
    end: SimTime,
    profile: TrafficProfile,
    ramp: UeRampSchedule,
    frame_sizes: Vec<u32>,
    ping_interval: SimTime,
    ping_bytes: u32,
    ping_timeout: SimTime,
    sample_interval: SimTime,
    backpressure: bool,
    stagger: bool,
    sched: Scheduler<Ev>,
    cpu: CpuNode,
    cpu_event: Option<(SimTime, EventHandle)>,
    shapers: Vec<Shaper>,
    tbf_release_pending: Vec<bool>,
    link: SharedLink,
    return_link: SharedLink,
    rngs: Vec<RngStream>,
    counters: Vec<Counters>,
    outstanding_probes: BTreeSet<(u8, u32, SimTime)>,
    bins: ThroughputBins,
    latency: Vec<MetricSample>,
    cpu_samples: Vec<MetricSample>,
    last_cpu_time: Vec<f64>,
    completed: Vec<(usize, Workload)>,
    released: Vec<(Workload, SimTime)>,
}

impl EdgeSimulation {
    pub fn new(config: &ExperimentConfig, params: &CalibrationParams, run: u32, seed: u64) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        let slices = usize::from(config.slice_count);
        let end = SimTime::from_secs_f64(config.run_length_s);
        let quota_period = SimTime::from_secs_f64(config.node.quota_period_s);

        let mut specs = Vec::with_capacity(slices);
        let mut shapers = Vec::with_capacity(slices);
        for i in 0..slices {
            let policy = config.policy(i);
            let quota = CpuQuota::new(policy.cpu_millicpu).map(|q| CpuQuota {
                period: quota_period,
                ..q
            });
            let surcharge = if policy.shaper.is_active() {
                config.node.shaper_cpu_surcharge_s
            } else {
                0.0
            };
            specs.push(UpfSpec {
                nice: policy.effective_nice(),
                quota,
                per_workload_cpu_s: surcharge,
            });
            shapers.push(Shaper::new(&policy.shaper, SimTime::ZERO));
        }
        let cpu = CpuNode::new(
            CpuNodeConfig {
                capacity_cores: params.cpu_capacity_cores,
                upf_max_cores: params.upf_max_cores,
                cost_per_byte: params.cost_per_byte,
                queue_bytes: config.node.upf_queue_bytes,
            },
            specs,
        )?;
        let base = SimTime::from_secs_f64(params.base_one_way_delay_s);
        let sample_interval = SimTime::from_secs(config.node.sample_interval_s);

        let mut sim = EdgeSimulation {
            experiment: config.id,
            run,
            seed,
            slices,
            end,
            profile: config.workload.traffic.clone(),
            ramp: config.ramp(),
            frame_sizes: traffic::workload_sizes(&config.workload.traffic)?,
            ping_interval: SimTime::from_secs_f64(config.workload.ping.emission_interval_s),
            ping_bytes: config.workload.ping.payload_bytes,
            ping_timeout: SimTime::from_secs_f64(config.node.ping_timeout_s),
            sample_interval,
            backpressure: config.node.egress_backpressure,
            stagger: config.workload.stagger_ue_starts,
            sched: Scheduler::new(),
            cpu,
            cpu_event: None,
            shapers,
            tbf_release_pending: vec![false; slices],
            link: SharedLink::new(&config.link, base),
            return_link: SharedLink::new(&config.link, base),
            rngs: (0..slices).map(|i| RngStream::new(seed, i as u64 + 1)).collect(),
            counters: (0..slices).map(|_| Counters::default()).collect(),
            outstanding_probes: BTreeSet::new(),
            bins: ThroughputBins::new(slices, sample_interval, end),
            latency: Vec::new(),
            cpu_samples: Vec::new(),
            last_cpu_time: vec![0.0; slices],
            completed: Vec::new(),
            released: Vec::new(),
        };
        sim.schedule_initial(quota_period)?;
        Ok(sim)
    }

    fn schedule_initial(&mut self, quota_period: SimTime) -> Result<()> {
        for i in 0..self.slices {
            let slice = SliceId::from_index(i);
            for (ue, at) in traffic::ue_activations(&self.ramp, slice) {
                if at < self.end {
                    self.sched.schedule(at, EventKind::UeArrival, Ev::UeStart { slice: slice.0, ue, at })?;
                }
            }
            if self.cpu.quota(i).is_some() && quota_period <= self.end {
                self.sched.schedule(quota_period, EventKind::QuotaPeriodBoundary, Ev::Quota { upf: i })?;
            }
        }
        self.sched.schedule(SimTime::ZERO, EventKind::MetricsTick, Ev::Tick { k: 0 })?;
        self.sched.schedule(self.end, EventKind::RunEnd, Ev::End)?;
        Ok(())
    }

    /// Runs to the horizon and returns samples plus the conservation audit.
    pub fn run(mut self) -> Result<RunOutput> {
        while let Some(ev) = self.sched.pop_until(self.end) {
            self.handle(ev.payload)?;
        }
        self.sched.advance_to(self.end);
        Ok(self.finish())
    }

    fn handle(&mut self, ev: Ev) -> Result<()> {
        let now = self.sched.now();
        match ev {
            Ev::UeStart { slice, ue, at } => {
                let at = if self.stagger {
                    at + traffic::start_phase(SliceId(slice), ue, self.profile.frame_interval())
                } else {
                    at
                };
                if at >= self.end {
                    return Ok(());
                }
                self.sched.schedule(
                    at,
                    EventKind::FrameEmission,
                    Ev::Frame { slice, ue, k: 0, activation: at },
                )?;
                self.schedule_ping(slice, ue, 0, at)?;
            }
            Ev::Frame { slice, ue, k, activation } => {
                self.emit_frame(slice, ue, now);
                let next = self.profile.frame_time(activation, k + 1);
                if next < self.end {
                    let idx = usize::from(slice) - 1;
                    let at = if self.profile.jitter_s > 0.0 {
                        traffic::jitter(next, now, self.profile.jitter_s, &mut self.rngs[idx])
                    } else {
                        next
                    };
                    self.sched.schedule(
                        at,
                        EventKind::FrameEmission,
                        Ev::Frame { slice, ue, k: k + 1, activation },
                    )?;
                }
            }
            Ev::Ping { slice, ue, k, activation } => {
                let idx = usize::from(slice) - 1;
                self.counters[idx].probes_sent += 1;
                self.outstanding_probes.insert((slice, ue, now));
                let w = Workload::ping(SliceId(slice), ue, self.ping_bytes, now);
                self.offer_upf(idx, w, now);
                self.schedule_ping(slice, ue, k + 1, activation)?;
            }
            Ev::Cpu => {
                self.cpu_event = None;
                let mut done = std::mem::take(&mut self.completed);
                self.cpu.complete(now, &mut done);
                for (upf, w) in done.drain(..) {
                    self.to_shaper(upf, w, now)?;
                }
                self.completed = done;
            }
            Ev::Quota { upf } => {
                self.cpu.period_boundary(upf, now);
                let next = now + self.cpu.quota(upf).expect("quota set").period;
                if next <= self.end {
                    self.sched.schedule(next, EventKind::QuotaPeriodBoundary, Ev::Quota { upf })?;
                }
            }
            Ev::TbfRelease { upf } => {
                self.tbf_release_pending[upf] = false;
                let mut released = std::mem::take(&mut self.released);
                if let Shaper::Tbf(tbf) = &mut self.shapers[upf] {
                    tbf.release(now, &mut released);
                }
                for (w, at) in released.drain(..) {
                    self.sched.schedule(at, EventKind::ShaperDeparture, Ev::ShaperOut { w })?;
                }
                self.released = released;
                self.arm_tbf_release(upf)?;
                self.maybe_unblock(upf, now);
            }
            Ev::ShaperOut { w } => {
                let upf = w.slice.index();
                self.shapers[upf].on_departure();
                if w.kind == WorkloadKind::Data {
                    self.counters[upf].in_shaper -= 1;
                }
                self.to_link(w, now)?;
                self.maybe_unblock(upf, now);
            }
            Ev::LinkOut { w, arrival } => self.link_out(w, arrival),
            Ev::Tick { k } => {
                self.cpu.advance(now);
                let window = self.sample_interval.as_secs_f64();
                for i in 0..self.slices {
                    let used = self.cpu.cpu_time(i);
                    let value = if k == 0 { 0.0 } else { (used - self.last_cpu_time[i]) / window };
                    self.last_cpu_time[i] = used;
                    self.cpu_samples.push(MetricSample::new(
                        self.experiment,
                        self.run,
                        Metric::CpuFraction,
                        SliceId::from_index(i),
                        now.as_secs_f64(),
                        value,
                    ));
                }
                let next = now + self.sample_interval;
                if next <= self.end {
                    self.sched.schedule(next, EventKind::MetricsTick, Ev::Tick { k: k + 1 })?;
                }
            }
            Ev::End => {}
        }
        self.reschedule_cpu()
    }

    fn schedule_ping(&mut self, slice: u8, ue: u32, k: u64, activation: SimTime) -> Result<()> {
        let key = k as f64 * PHI_K + (f64::from(slice) * 8.0 + f64::from(ue)) * PHI_UE;
        let phase = SimTime::from_secs_f64(key.fract() * self.profile.frame_interval());
        let at = activation + SimTime::from_nanos(k * self.ping_interval.as_nanos()) + phase;
        if at < self.end {
            self.sched.schedule(at, EventKind::PingEmission, Ev::Ping { slice, ue, k, activation })?;
        }
        Ok(())
    }

    fn emit_frame(&mut self, slice: u8, ue: u32, now: SimTime) {
        let idx = usize::from(slice) - 1;
        for n in 0..self.frame_sizes.len() {
            let size = self.frame_sizes[n];
            let c = &mut self.counters[idx];
            c.generated += 1;
            c.generated_bytes += u64::from(size);
            self.offer_upf(idx, Workload::data(SliceId(slice), ue, size, now), now);
        }
    }

    fn offer_upf(&mut self, upf: usize, w: Workload, now: SimTime) {
        let kind = w.kind;
        let key = (w.slice.0, w.ue, w.created_at);
        if !self.cpu.enqueue(upf, w, now) {
            self.lose(upf, kind, key, Loss::Upf);
        }
    }

    fn lose(&mut self, upf: usize, kind: WorkloadKind, key: (u8, u32, SimTime), at: Loss) {
        let c = &mut self.counters[upf];
        match kind {
            WorkloadKind::Data => match at {
                Loss::Upf => c.dropped_upf += 1,
                Loss::Shaper => c.dropped_shaper += 1,
                Loss::Link => c.dropped_link += 1,
            },
            WorkloadKind::Ping => {
                c.probes_lost += 1;
                self.outstanding_probes.remove(&key);
            }
        }
    }

    fn to_shaper(&mut self, upf: usize, w: Workload, now: SimTime) -> Result<()> {
        let kind = w.kind;
        let key = (w.slice.0, w.ue, w.created_at);
        match self.shapers[upf].admit(w, now) {
            Admit::Depart(w, at) if at == now => {
                self.shapers[upf].on_departure();
                self.to_link(w, now)?;
            }
            Admit::Depart(w, at) => {
                if kind == WorkloadKind::Data {
                    self.counters[upf].in_shaper += 1;
                }
                self.sched.schedule(at, EventKind::ShaperDeparture, Ev::ShaperOut { w })?;
            }
            Admit::Queued => {
                if kind == WorkloadKind::Data {
                    self.counters[upf].in_shaper += 1;
                }
                self.arm_tbf_release(upf)?;
            }
            Admit::Dropped(_) => self.lose(upf, kind, key, Loss::Shaper),
        }
        if self.backpressure && self.shapers[upf].is_full() {
            self.cpu.set_blocked(upf, true, now);
        }
        Ok(())
    }

    fn arm_tbf_release(&mut self, upf: usize) -> Result<()> {
        if self.tbf_release_pending[upf] {
            return Ok(());
        }
        if let Shaper::Tbf(tbf) = &self.shapers[upf] {
            if let Some(at) = tbf.next_release() {
                let at = at.max(self.sched.now());
                self.sched.schedule(at, EventKind::ShaperDeparture, Ev::TbfRelease { upf })?;
                self.tbf_release_pending[upf] = true;
            }
        }
        Ok(())
    }

    fn maybe_unblock(&mut self, upf: usize, now: SimTime) {
        if self.cpu.is_blocked(upf) && !self.shapers[upf].is_full() {
            self.cpu.set_blocked(upf, false, now);
        }
    }

    fn to_link(&mut self, w: Workload, now: SimTime) -> Result<()> {
        let upf = w.slice.index();
        match self.link.transmit(w.size, now) {
            Transmit::Depart { departure, arrival } => {
                if w.kind == WorkloadKind::Data {
                    self.counters[upf].in_link += 1;
                }
                self.sched
                    .schedule(departure, EventKind::LinkDeparture, Ev::LinkOut { w, arrival })?;
            }
            Transmit::Dropped => {
                let key = (w.slice.0, w.ue, w.created_at);
                self.lose(upf, w.kind, key, Loss::Link);
            }
        }
        Ok(())
    }

    fn link_out(&mut self, mut w: Workload, arrival: SimTime) {
        let upf = w.slice.index();
        match w.kind {
            WorkloadKind::Data => {
                if arrival <= self.end {
                    w.delivered_at = Some(arrival);
                    let c = &mut self.counters[upf];
                    c.in_link -= 1;
                    c.delivered += 1;
                    c.delivered_bytes += u64::from(w.size);
                    self.bins.record(w.slice, arrival, f64::from(w.size) * 8.0);
                }
            }
            WorkloadKind::Ping => {
                let key = (w.slice.0, w.ue, w.created_at);
                let Transmit::Depart { arrival: echo, .. } = self.return_link.transmit(self.ping_bytes, arrival) else {
                    self.lose(upf, WorkloadKind::Ping, key, Loss::Link);
                    return;
                };
                if echo > self.end {
                    // settled at run end as unresolved or timed out
                    return;
                }
                self.outstanding_probes.remove(&key);
                let rtt = echo - w.created_at;
                let c = &mut self.counters[upf];
                if rtt > self.ping_timeout {
                    c.probes_timed_out += 1;
                } else {
                    c.probes_answered += 1;
                    self.latency.push(MetricSample::new(
                        self.experiment,
                        self.run,
                        Metric::LatencyMs,
                        w.slice,
                        w.created_at.as_secs_f64(),
                        rtt.as_millis_f64(),
                    ));
                }
            }
        }
    }

    fn reschedule_cpu(&mut self) -> Result<()> {
        let next = self.cpu.next_event();
        let current = self.cpu_event.map(|(t, _)| t);
        if next == current {
            return Ok(());
        }
        if let Some((_, handle)) = self.cpu_event.take() {
            self.sched.cancel(handle);
        }
        if let Some(at) = next {
            let handle = self.sched.schedule(at, EventKind::CpuServiceComplete, Ev::Cpu)?;
            self.cpu_event = Some((at, handle));
        }
        Ok(())
    }

    fn finish(mut self) -> RunOutput {
        self.cpu.advance(self.end);
        let mut slices = Vec::with_capacity(self.slices);
        let mut unresolved = vec![0u64; self.slices];
        let mut timed_out = vec![0u64; self.slices];
        for &(slice, _, sent) in &self.outstanding_probes {
            let i = usize::from(slice) - 1;
            if self.end - sent > self.ping_timeout {
                timed_out[i] += 1;
            } else {
                unresolved[i] += 1;
            }
        }
        for i in 0..self.slices {
            let c = &self.counters[i];
            let resident_upf = self.cpu.queued(i).filter(|w| w.kind == WorkloadKind::Data).count() as u64;
            let max_period_runtime_s = self
                .cpu
                .quota(i)
                .map(|_| self.cpu.period_runtimes(i).iter().copied().fold(0.0, f64::max));
            slices.push(SliceAudit {
                slice: SliceId::from_index(i),
                generated: c.generated,
                generated_bytes: c.generated_bytes,
                delivered: c.delivered,
                delivered_bytes: c.delivered_bytes,
                dropped_upf: c.dropped_upf,
                dropped_shaper: c.dropped_shaper,
                dropped_link: c.dropped_link,
                resident_upf,
                resident_shaper: c.in_shaper,
                resident_link: c.in_link,
                probes_sent: c.probes_sent,
                probes_answered: c.probes_answered,
                probes_lost: c.probes_lost,
                probes_timed_out: c.probes_timed_out + timed_out[i],
                probes_unresolved: unresolved[i],
                cpu_seconds: self.cpu.cpu_time(i),
                max_period_runtime_s,
            });
        }

        let mut samples = self.bins.samples(self.experiment, self.run);
        self.latency
            .sort_by(|a, b| (a.slice, a.time_s).partial_cmp(&(b.slice, b.time_s)).expect("finite times"));
        samples.append(&mut self.latency);
        self.cpu_samples.sort_by_key(|s| s.slice);
        samples.append(&mut self.cpu_samples);

        RunOutput {
            samples,
            audit: RunAudit {
                experiment: self.experiment,
                run: self.run,
                seed: self.seed,
                events: self.sched.processed(),
                slices,
            },
        }
    }
}

#[derive(Clone, Copy)]
enum Loss {
    Upf,
    Shaper,
    Link,
}

/// Runs one repetition of `config`.
pub fn simulate(config: &ExperimentConfig, params: &CalibrationParams, run: u32, seed: u64) -> Result<RunOutput> {
    EdgeSimulation::new(config, params, run, seed)?.run()
}
