//! Chart-ready distribution data and the persistent session transcript.

mod log;
mod stats;

use thiserror::Error;

pub use log::{
    valid_session_id, BallotEntry, LogRecord, LogStore, SessionHeader, SessionLog, LOG_FORMAT,
    LOG_VERSION,
};
pub use stats::{
    compute_stats, stream, ContinuousStats, HistogramScope, IterationStats, StreamSeries,
    HISTOGRAM_BINS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("session log is empty")]
    EmptyLog,
    #[error("out-of-order append: expected record {expected}, got {found}")]
    OutOfOrder { expected: u64, found: u64 },
    #[error("corrupt session log: {0}")]
    Corrupt(String),
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("session `{0}` not found")]
    NotFound(String),
    #[error("invalid session id `{0}`")]
    InvalidSessionId(String),
    #[error("replayed state diverges at record {index}")]
    ReplayMismatch { index: u64 },
}
