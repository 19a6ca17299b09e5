use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::analytics::MetricsSnapshot;
use crate::briefing::DailyBrief;
use crate::ledger::Signal;
use crate::marketdata::{AssetId, PriceBar};
use crate::protocol::{AgentLabel, DecisionRecord, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    PriceObserved,
    BriefPublished,
    DecisionRequested,
    DecisionMade,
    FillApplied,
    SnapshotEmitted,
    GapNoted,
    FailureNoted,
}

impl EventKind {
    /// Position of the kind within a date's event group. Gaps sit with
    /// prices and failures with decisions.
    pub fn stage(self) -> u8 {
        match self {
            EventKind::PriceObserved | EventKind::GapNoted => 0,
            EventKind::BriefPublished => 1,
            EventKind::DecisionRequested => 2,
            EventKind::DecisionMade | EventKind::FailureNoted => 3,
            EventKind::FillApplied => 4,
            EventKind::SnapshotEmitted => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequested {
    pub agent: AgentLabel,
    pub asset: AssetId,
    pub phase: Phase,
    /// Digest of the shared market fields of the agent's context.
    pub context_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fill {
    pub agent: AgentLabel,
    pub asset: AssetId,
    pub phase: Phase,
    pub signal: Signal,
    pub prev_close: f64,
    pub close: f64,
    pub position_changed: bool,
    pub fee_bps: f64,
    pub gross: f64,
    pub net: f64,
    pub periods_per_year: f64,
    pub risk_free: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub agent: AgentLabel,
    pub asset: AssetId,
    pub phase: Phase,
    pub equity: f64,
    /// Live metrics to date; absent during warm-up.
    pub metrics: Option<MetricsSnapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapReason {
    MissingPrice,
    BriefUnavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub asset: AssetId,
    pub reason: GapReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub agent: AgentLabel,
    pub asset: AssetId,
    pub phase: Phase,
    pub attempts: u32,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    PriceObserved(PriceBar),
    BriefPublished(DailyBrief),
    DecisionRequested(DecisionRequested),
    DecisionMade(DecisionRecord),
    FillApplied(Fill),
    SnapshotEmitted(Snapshot),
    GapNoted(Gap),
    FailureNoted(Failure),
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            EventBody::PriceObserved(_) => EventKind::PriceObserved,
            EventBody::BriefPublished(_) => EventKind::BriefPublished,
            EventBody::DecisionRequested(_) => EventKind::DecisionRequested,
            EventBody::DecisionMade(_) => EventKind::DecisionMade,
            EventBody::FillApplied(_) => EventKind::FillApplied,
            EventBody::SnapshotEmitted(_) => EventKind::SnapshotEmitted,
            EventBody::GapNoted(_) => EventKind::GapNoted,
            EventBody::FailureNoted(_) => EventKind::FailureNoted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaEvent {
    pub seq: u64,
    pub run_id: String,
    pub date: NaiveDate,
    #[serde(flatten)]
    pub body: EventBody,
}

impl ArenaEvent {
    pub fn kind(&self) -> EventKind {
        self.body.kind()
    }
}
