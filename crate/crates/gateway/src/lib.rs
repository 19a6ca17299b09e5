//! HTTP API, live runner and command-line front end for the arena.

pub mod api;
pub mod cli;
pub mod live;
pub mod registry;
pub mod remote;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use arena_core::config::{ConfigError, ProviderKind, RunConfig};
use arena_core::persistence::{read_log, ArenaState, LogError, StateError};
use arena_core::protocol::{Providers, SessionError};
use arena_core::provider::{CompletionProvider, RecordedReplies, RecordingProvider};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("{0}")]
    Registry(String),
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

impl GatewayError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        GatewayError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    }
}

/// Folds `<run_dir>/events.log`.
pub fn replay_dir(run_dir: &Path) -> Result<ArenaState, GatewayError> {
    let events = read_log(&run_dir.join(arena_core::persistence::LOG_FILE))?;
    Ok(ArenaState::replay(&events)?)
}

/// Builds the configured completion providers. Recorded providers read
/// `replies_dir`; `record = true` on a live provider also writes every reply
/// there.
pub fn build_providers(cfg: &RunConfig, replies_dir: &Path) -> Result<Providers, GatewayError> {
    let mut providers = Providers::default();
    for pc in &cfg.providers {
        let provider: Arc<dyn CompletionProvider> = match pc.kind {
            ProviderKind::Recorded => Arc::new(RecordedReplies::new(replies_dir)),
            ProviderKind::OpenaiCompatible => {
                let live = remote::OpenAiProvider::from_config(pc)?;
                if pc.record {
                    Arc::new(RecordingProvider::new(live, RecordedReplies::new(replies_dir)))
                } else {
                    Arc::new(live)
                }
            }
        };
        if pc.model == "*" {
            providers.default = Some(provider);
        } else {
            providers.by_model.insert(pc.model.clone(), provider);
        }
    }
    Ok(providers)
}
