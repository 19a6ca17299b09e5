//! Published run state. Readers load an immutable snapshot without locking;
//! writers replace it wholesale and bump the data version.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use arena_core::analytics::{LeaderboardEntry, LeaderboardFilter, LeaderboardRow};
use arena_core::persistence::{ArenaState, EquitySeries};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunMode {
    Replay,
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    WarmingUp,
    Running,
    Stopped,
    Failed,
}

impl RunStatus {
    pub fn can_become(self, next: RunStatus) -> bool {
        use RunStatus::*;
        matches!(
            (self, next),
            (WarmingUp, Running) | (Running, Stopped) | (Running, Failed) | (WarmingUp, Failed) | (WarmingUp, Stopped)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Stopped | RunStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunHandle {
    pub run_id: String,
    pub mode: RunMode,
    pub status: RunStatus,
    pub started: DateTime<Utc>,
}

#[derive(Debug, Clone)]
pub struct RunView {
    pub handle: RunHandle,
    pub state: Arc<ArenaState>,
}

/// One consistent view of every run, tagged with a data version.
#[derive(Debug, Clone, Default)]
pub struct Published {
    pub version: u64,
    pub runs: BTreeMap<String, RunView>,
}

impl Published {
    pub fn entries(&self) -> Vec<LeaderboardEntry> {
        self.runs.values().flat_map(|r| r.state.entries()).collect()
    }

    pub fn leaderboard(&self, filter: &LeaderboardFilter) -> Vec<LeaderboardRow> {
        arena_core::analytics::leaderboard(&self.entries(), filter)
    }

    pub fn equity(&self, filter: &LeaderboardFilter) -> Vec<EquitySeries> {
        self.runs.values().flat_map(|r| r.state.equity_series(filter)).collect()
    }
}

#[derive(Default)]
pub struct Registry {
    published: ArcSwap<Published>,
    stops: Mutex<BTreeMap<String, Arc<AtomicBool>>>,
    write: Mutex<()>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&self) -> Arc<Published> {
        self.published.load_full()
    }

    fn update(&self, f: impl FnOnce(&mut Published) -> Result<(), GatewayError>) -> Result<(), GatewayError> {
        let _guard = self.write.lock().expect("registry writer poisoned");
        let mut next = (*self.published.load_full()).clone();
        f(&mut next)?;
        next.version += 1;
        self.published.store(Arc::new(next));
        Ok(())
    }

    /// Adds a run and returns the flag its runner polls for stop requests.
    pub fn register(&self, handle: RunHandle, state: ArenaState) -> Result<Arc<AtomicBool>, GatewayError> {
        let run_id = handle.run_id.clone();
        self.update(|p| {
            if p.runs.contains_key(&run_id) {
                return Err(GatewayError::Registry(format!("run `{run_id}` already exists")));
            }
            p.runs.insert(
                run_id.clone(),
                RunView {
                    handle,
                    state: Arc::new(state),
                },
            );
            Ok(())
        })?;
        let flag = Arc::new(AtomicBool::new(false));
        self.stops.lock().expect("stop map poisoned").insert(run_id, flag.clone());
        Ok(flag)
    }

    pub fn publish_state(&self, run_id: &str, state: ArenaState) -> Result<(), GatewayError> {
        self.update(|p| {
            let view = p
                .runs
                .get_mut(run_id)
                .ok_or_else(|| GatewayError::Registry(format!("unknown run `{run_id}`")))?;
            view.state = Arc::new(state);
            Ok(())
        })
    }

    pub fn set_status(&self, run_id: &str, status: RunStatus) -> Result<(), GatewayError> {
        self.update(|p| {
            let view = p
                .runs
                .get_mut(run_id)
                .ok_or_else(|| GatewayError::Registry(format!("unknown run `{run_id}`")))?;
            if view.handle.status == status {
                return Ok(());
            }
            if !view.handle.status.can_become(status) {
                return Err(GatewayError::Registry(format!(
                    "run `{run_id}` cannot go from {:?} to {status:?}",
                    view.handle.status
                )));
            }
            view.handle.status = status;
            Ok(())
        })
    }

    pub fn status(&self, run_id: &str) -> Option<RunStatus> {
        self.snapshot().runs.get(run_id).map(|r| r.handle.status)
    }

    /// Asks a live run to stop; replay runs are marked stopped directly.
    pub fn request_stop(&self, run_id: &str) -> Result<RunStatus, GatewayError> {
        let snapshot = self.snapshot();
        let view = snapshot
            .runs
            .get(run_id)
            .ok_or_else(|| GatewayError::Registry(format!("unknown run `{run_id}`")))?;
        if view.handle.status.is_terminal() {
            return Ok(view.handle.status);
        }
        if let Some(flag) = self.stops.lock().expect("stop map poisoned").get(run_id) {
            flag.store(true, Ordering::SeqCst);
        }
        if view.handle.mode == RunMode::Replay {
            self.set_status(run_id, RunStatus::Stopped)?;
            return Ok(RunStatus::Stopped);
        }
        Ok(view.handle.status)
    }
}
