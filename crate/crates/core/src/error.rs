use thiserror::Error;

use crate::sim::SimTime;

#[derive(Debug, Error)]
pub enum Error {
    #[error("event scheduled in the past: fire time {at} precedes current time {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },

    #[error("frame rate must be positive, got {0}")]
    InvalidFrameRate(f64),

    #[error("nice value {0} is outside [-20, 19]")]
    NiceOutOfRange(i32),

    #[error("cannot compute CPU fractions of an empty task list")]
    EmptyTaskList,

    #[error("no samples to summarize")]
    EmptySamples,

    #[error("unknown experiment id {0} (catalog holds 1-26)")]
    UnknownExperiment(u32),

    #[error("repetitions must be positive")]
    ZeroRepetitions,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
