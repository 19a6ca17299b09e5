//! Text-completion providers. Live backends, the recorded-reply store used
//! for replay, and a recorder that captures live replies into that store.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("no recorded reply for {0}")]
    MissingRecording(String),
    #[error("io error: {0}")]
    Io(String),
}

/// One completion call. Retries resend an identical request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
}

/// Identifies which (agent, asset, date, attempt) a call belongs to.
/// Live backends ignore it; the recorded store is keyed by it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RequestTag {
    pub agent: String,
    pub symbol: String,
    pub date: NaiveDate,
    pub attempt: u32,
}

impl std::fmt::Display for RequestTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}/{}", self.agent, self.symbol, self.date, self.attempt)
    }
}

pub trait CompletionProvider: Send + Sync {
    fn complete(&self, tag: &RequestTag, request: &CompletionRequest) -> Result<String, ProviderError>;
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for std::sync::Arc<P> {
    fn complete(&self, tag: &RequestTag, request: &CompletionRequest) -> Result<String, ProviderError> {
        (**self).complete(tag, request)
    }
}

/// Replies stored one file per call at
/// `<root>/<agent>/<symbol>/<date>/<attempt>.txt`.
#[derive(Debug, Clone)]
pub struct RecordedReplies {
    root: PathBuf,
}

impl RecordedReplies {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path_for(&self, tag: &RequestTag) -> PathBuf {
        self.root
            .join(path_component(&tag.agent))
            .join(path_component(&tag.symbol))
            .join(tag.date.to_string())
            .join(format!("{}.txt", tag.attempt))
    }

    pub fn store(&self, tag: &RequestTag, reply: &str) -> Result<(), ProviderError> {
        let path = self.path_for(tag);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| ProviderError::Io(e.to_string()))?;
        }
        fs::write(&path, reply).map_err(|e| ProviderError::Io(e.to_string()))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl CompletionProvider for RecordedReplies {
    fn complete(&self, tag: &RequestTag, _request: &CompletionRequest) -> Result<String, ProviderError> {
        fs::read_to_string(self.path_for(tag)).map_err(|_| ProviderError::MissingRecording(tag.to_string()))
    }
}

/// Agent ids may contain characters that are awkward in file names.
pub fn path_component(raw: &str) -> String {
    raw.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Forwards to a live provider and stores each successful reply.
pub struct RecordingProvider<P> {
    inner: P,
    store: RecordedReplies,
}

impl<P> RecordingProvider<P> {
    pub fn new(inner: P, store: RecordedReplies) -> Self {
        Self { inner, store }
    }
}

impl<P: CompletionProvider> CompletionProvider for RecordingProvider<P> {
    fn complete(&self, tag: &RequestTag, request: &CompletionRequest) -> Result<String, ProviderError> {
        let reply = self.inner.complete(tag, request)?;
        self.store.store(tag, &reply)?;
        Ok(reply)
    }
}

/// In-memory recorded replies keyed by tag. Handy for tests and for
/// deterministic stubs.
#[derive(Debug, Default)]
pub struct MemoryReplies {
    replies: BTreeMap<RequestTag, String>,
    calls: Mutex<Vec<RequestTag>>,
}

impl MemoryReplies {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, tag: RequestTag, reply: impl Into<String>) {
        self.replies.insert(tag, reply.into());
    }

    pub fn calls(&self) -> Vec<RequestTag> {
        self.calls.lock().expect("poisoned").clone()
    }
}

impl CompletionProvider for MemoryReplies {
    fn complete(&self, tag: &RequestTag, _request: &CompletionRequest) -> Result<String, ProviderError> {
        self.calls.lock().expect("poisoned").push(tag.clone());
        self.replies
            .get(tag)
            .cloned()
            .ok_or_else(|| ProviderError::MissingRecording(tag.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(attempt: u32) -> RequestTag {
        RequestTag {
            agent: "Investor:GPT-4o".into(),
            symbol: "BTC".into(),
            date: NaiveDate::from_ymd_opt(2025, 8, 13).unwrap(),
            attempt,
        }
    }

    fn request() -> CompletionRequest {
        CompletionRequest {
            model: "m".into(),
            system: "s".into(),
            user: "u".into(),
            temperature: 0.5,
        }
    }

    struct Echo;
    impl CompletionProvider for Echo {
        fn complete(&self, tag: &RequestTag, _: &CompletionRequest) -> Result<String, ProviderError> {
            Ok(format!("reply {}", tag.attempt))
        }
    }

    #[test]
    fn recorder_roundtrips_through_store() {
        let dir = tempfile::tempdir().unwrap();
        let store = RecordedReplies::new(dir.path());
        let recorder = RecordingProvider::new(Echo, store.clone());
        assert_eq!(recorder.complete(&tag(2), &request()).unwrap(), "reply 2");
        assert_eq!(store.complete(&tag(2), &request()).unwrap(), "reply 2");
        assert!(store.path_for(&tag(2)).ends_with("Investor_GPT-4o/BTC/2025-08-13/2.txt"));
        assert!(matches!(
            store.complete(&tag(3), &request()),
            Err(ProviderError::MissingRecording(_))
        ));
    }
}
