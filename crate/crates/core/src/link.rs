//! The shared bottleneck link to the server: FIFO, drop-tail, with
//! serialization delay and a fixed propagation/processing delay.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    pub capacity_bps: f64,
    /// Workloads the link holds, including the one being serialized.
    pub buffer: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            capacity_bps: 1e9,
            buffer: 1000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transmit {
    /// Leaves the wire at `departure` and reaches the far end at `arrival`.
    Depart { departure: SimTime, arrival: SimTime },
    Dropped,
}

#[derive(Debug)]
pub struct SharedLink {
    capacity_bps: f64,
    buffer: usize,
    base_delay: SimTime,
    busy_until: SimTime,
    /// Departure instants of resident workloads, oldest first.
    resident: VecDeque<SimTime>,
    dropped: u64,
}

impl SharedLink {
    pub fn new(cfg: &LinkConfig, base_one_way_delay: SimTime) -> Self {
        SharedLink {
            capacity_bps: cfg.capacity_bps,
            buffer: cfg.buffer,
            base_delay: base_one_way_delay,
            busy_until: SimTime::ZERO,
            resident: VecDeque::new(),
            dropped: 0,
        }
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    /// Workloads queued or in serialization at `t`.
    pub fn occupancy(&mut self, t: SimTime) -> usize {
        self.purge(t);
        self.resident.len()
    }

    fn purge(&mut self, t: SimTime) {
        while self.resident.front().is_some_and(|&d| d <= t) {
            self.resident.pop_front();
        }
    }

    pub fn serialization(&self, size: u32) -> SimTime {
        SimTime::from_secs_f64_ceil(f64::from(size) * 8.0 / self.capacity_bps)
    }

    /// Offers `size` bytes at `t`. Calls must come in non-decreasing `t`.
    pub fn transmit(&mut self, size: u32, t: SimTime) -> Transmit {
        self.purge(t);
        if self.resident.len() >= self.buffer {
            self.dropped += 1;
            return Transmit::Dropped;
        }
        let departure = t.max(self.busy_until) + self.serialization(size);
        self.busy_until = departure;
        self.resident.push_back(departure);
        Transmit::Depart {
            departure,
            arrival: departure + self.base_delay,
        }
    }
}

/// Round-trip time in milliseconds.
pub fn rtt_ms(sent: SimTime, echo_arrival: SimTime) -> f64 {
    (echo_arrival - sent).as_millis_f64()
}

/// RTT of a probe that meets no queue anywhere: propagation both ways plus
/// CPU service and serialization in each direction.
pub fn unloaded_rtt(cfg: &LinkConfig, base_one_way_delay: f64, payload: u32, cpu_service_s: f64) -> f64 {
    let ser = f64::from(payload) * 8.0 / cfg.capacity_bps;
    2.0 * base_one_way_delay + cpu_service_s + 2.0 * ser
}
