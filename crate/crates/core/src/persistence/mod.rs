//! Append-only event log per run and the pure fold that rebuilds ledgers,
//! snapshots and leaderboards from it.

mod event;
mod log;
mod state;

pub use event::{
    ArenaEvent, DecisionRequested, EventBody, EventKind, Failure, Fill, Gap, GapReason, Snapshot,
};
pub use log::{decode_line, encode_line, read_log, scan, verify, EventSink, FileLog, LogError, MemoryLog, Scan, Validator, VerifyReport};
pub use state::{ArenaState, EquityPointOut, EquitySeries, ReturnPoint, Series, StateError};

use std::path::{Path, PathBuf};

pub const LOG_FILE: &str = "events.log";

/// `<root>/runs/<run_id>/events.log`.
pub fn log_path(root: &Path, run_id: &str) -> PathBuf {
    root.join("runs").join(run_id).join(LOG_FILE)
}
