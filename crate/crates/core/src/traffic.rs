//! Workload generation: isochronous per-UE video streams, the UE ramp and
//! ping probes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{RngStream, SimTime};

/// Slice identifier, 1-based. Slice 1 is the priority slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SliceId(pub u8);

impl SliceId {
    pub const PRIORITY: SliceId = SliceId(1);

    pub fn is_priority(self) -> bool {
        self == Self::PRIORITY
    }

    /// Zero-based index into per-slice arrays.
    pub fn index(self) -> usize {
        usize::from(self.0) - 1
    }

    pub fn from_index(i: usize) -> Self {
        SliceId(i as u8 + 1)
    }
}

impl fmt::Display for SliceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// One workload per video frame.
    #[default]
    Frame,
    /// Frames split into `mtu_payload`-sized datagrams.
    Packet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficProfile {
    pub frame_rate: f64,
    pub bitrate_bps: f64,
    pub granularity: Granularity,
    pub mtu_payload: u32,
    /// Half-width of the uniform emission jitter, seconds. Zero disables it.
    pub jitter_s: f64,
}

impl Default for TrafficProfile {
    fn default() -> Self {
        TrafficProfile {
            frame_rate: 60.0,
            bitrate_bps: 45e6,
            granularity: Granularity::Frame,
            mtu_payload: 1472,
            jitter_s: 0.0,
        }
    }
}

impl TrafficProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::InvalidFrameRate(self.frame_rate));
        }
        if !(self.bitrate_bps >= 0.0 && self.bitrate_bps.is_finite()) {
            return Err(Error::InvalidConfig(format!("bitrate {} bps", self.bitrate_bps)));
        }
        if self.mtu_payload == 0 {
            return Err(Error::InvalidConfig("mtu_payload must be positive".into()));
        }
        if !(self.jitter_s >= 0.0) {
            return Err(Error::InvalidConfig(format!("jitter {} s", self.jitter_s)));
        }
        Ok(())
    }

    pub fn frame_interval(&self) -> f64 {
        1.0 / self.frame_rate
    }

    /// Emission instant of frame `k` of a stream activated at `activation`.
    pub fn frame_time(&self, activation: SimTime, k: u64) -> SimTime {
        activation + SimTime::from_nanos((k as f64 * 1e9 / self.frame_rate).round() as u64)
    }
}

/// Frame size in bytes: `bitrate / (8 * frame_rate)`.
pub fn frame_size(profile: &TrafficProfile) -> Result<f64> {
    if !(profile.frame_rate > 0.0) {
        return Err(Error::InvalidFrameRate(profile.frame_rate));
    }
    Ok(profile.bitrate_bps / (8.0 * profile.frame_rate))
}

/// Number of workloads one frame is carried in.
pub fn packets_per_frame(profile: &TrafficProfile) -> Result<u32> {
    let size = frame_size(profile)?;
    Ok(match profile.granularity {
        Granularity::Frame => 1,
        Granularity::Packet => (size / f64::from(profile.mtu_payload)).ceil() as u32,
    })
}

/// Sizes of the workloads making up one frame. The last packet carries the
/// remainder. A zero-byte frame yields no workloads.
pub fn workload_sizes(profile: &TrafficProfile) -> Result<Vec<u32>> {
    let total = frame_size(profile)?.round() as u64;
    if total == 0 {
        return Ok(Vec::new());
    }
    Ok(match profile.granularity {
        Granularity::Frame => vec![total as u32],
        Granularity::Packet => {
            let mtu = u64::from(profile.mtu_payload);
            let full = total / mtu;
            let mut sizes = vec![profile.mtu_payload; full as usize];
            if total % mtu != 0 {
                sizes.push((total % mtu) as u32);
            }
            sizes
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UeRampSchedule {
    pub priority_slice_ues: u32,
    pub low_slice_initial_ues: u32,
    pub max_low_slice_ues: u32,
    pub ramp_interval_s: f64,
    pub run_length_s: f64,
}

impl Default for UeRampSchedule {
    fn default() -> Self {
        UeRampSchedule {
            priority_slice_ues: 4,
            low_slice_initial_ues: 1,
            max_low_slice_ues: 5,
            ramp_interval_s: 240.0,
            run_length_s: 1200.0,
        }
    }
}

/// UEs active in `slice` at time `t` seconds.
pub fn active_ues(schedule: &UeRampSchedule, slice: SliceId, t: f64) -> u32 {
    if slice.is_priority() {
        return schedule.priority_slice_ues;
    }
    let added = (t.max(0.0) / schedule.ramp_interval_s).floor() as u32;
    (schedule.low_slice_initial_ues + added).min(schedule.max_low_slice_ues)
}

/// Activation time of the `ue`-th UE (0-based) of `slice`, or `None` if it
/// never starts within the run.
pub fn ue_activation(schedule: &UeRampSchedule, slice: SliceId, ue: u32) -> Option<SimTime> {
    if slice.is_priority() {
        return (ue < schedule.priority_slice_ues).then_some(SimTime::ZERO);
    }
    if ue >= schedule.max_low_slice_ues {
        return None;
    }
    if ue < schedule.low_slice_initial_ues {
        return Some(SimTime::ZERO);
    }
    let at = f64::from(ue - schedule.low_slice_initial_ues + 1) * schedule.ramp_interval_s;
    (at < schedule.run_length_s).then(|| SimTime::from_secs_f64(at))
}

/// Every UE that becomes active during the run, as `(ue, activation)`.
pub fn ue_activations(schedule: &UeRampSchedule, slice: SliceId) -> Vec<(u32, SimTime)> {
    let bound = if slice.is_priority() {
        schedule.priority_slice_ues
    } else {
        schedule.max_low_slice_ues
    };
    (0..bound)
        .filter_map(|ue| ue_activation(schedule, slice, ue).map(|t| (ue, t)))
        .collect()
}

/// Offset of a UE's first frame within one frame interval. Consecutive
/// `slice + 5 * ue` indices step by the golden ratio, so UEs that start
/// together spread over the interval instead of emitting in lockstep.
pub fn start_phase(slice: SliceId, ue: u32, frame_interval_s: f64) -> SimTime {
    const GOLDEN: f64 = 0.618_033_988_749_895;
    let index = f64::from(slice.0 - 1) + 5.0 * f64::from(ue);
    SimTime::from_secs_f64((index * GOLDEN).fract() * frame_interval_s)
}

/// Frame emission instants of one UE in `[activation, end)`.
///
/// With jitter enabled, each instant is displaced by a uniform draw from
/// `rng`, clamped so the stream never precedes its activation.
pub fn emit_stream<'a>(
    profile: &'a TrafficProfile,
    activation: SimTime,
    end: SimTime,
    mut rng: Option<&'a mut RngStream>,
) -> impl Iterator<Item = SimTime> + 'a {
    (0u64..)
        .map(move |k| profile.frame_time(activation, k))
        .take_while(move |&t| t < end)
        .map(move |t| match rng.as_deref_mut() {
            Some(r) if profile.jitter_s > 0.0 => jitter(t, activation, profile.jitter_s, r),
            _ => t,
        })
}

pub(crate) fn jitter(t: SimTime, floor: SimTime, half_width: f64, rng: &mut RngStream) -> SimTime {
    let shifted = t.as_secs_f64() + rng.uniform(-half_width, half_width);
    SimTime::from_secs_f64(shifted).max(floor)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PingConfig {
    pub emission_interval_s: f64,
    pub payload_bytes: u32,
}

impl Default for PingConfig {
    fn default() -> Self {
        PingConfig {
            emission_interval_s: 1.0,
            payload_bytes: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkloadKind {
    Data,
    Ping,
}

/// One unit of traffic on its way from a UE to the server.
#[derive(Clone, Debug, PartialEq)]
pub struct Workload {
    pub slice: SliceId,
    pub ue: u32,
    pub size: u32,
    pub created_at: SimTime,
    pub cpu_done_at: Option<SimTime>,
    pub delivered_at: Option<SimTime>,
    pub kind: WorkloadKind,
}

impl Workload {
    pub fn data(slice: SliceId, ue: u32, size: u32, created_at: SimTime) -> Self {
        Workload {
            slice,
            ue,
            size,
            created_at,
            cpu_done_at: None,
            delivered_at: None,
            kind: WorkloadKind::Data,
        }
    }

    pub fn ping(slice: SliceId, ue: u32, size: u32, created_at: SimTime) -> Self {
        Workload {
            kind: WorkloadKind::Ping,
            ..Workload::data(slice, ue, size, created_at)
        }
    }
}
