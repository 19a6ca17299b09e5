//! The agent execution protocol: shared daily inputs, the BUY/SELL/HOLD
//! contract, prompt rendering and reply parsing with bounded retries,
//! majority-vote ensembles, and the synchronous daily session loop.

mod decide;
mod prompt;
mod session;

pub use decide::{decide_scripted, decide_with_retry, majority_vote, parse_decision, ScriptBook};
pub use prompt::{build_decision_prompt, DecisionPrompt, NO_NEWS_MARKER};
pub use session::{
    flatten_roster, run_session, MarketData, Providers, Session, SessionEnv, SessionError, SessionPlan,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::briefing::DailyBrief;
use crate::ledger::Signal;
use crate::marketdata::{AssetId, PriceBar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("no `[Decision]: <action>` line in reply")]
    MissingDecision,
    #[error("unrecognized decision `{0}`")]
    UnknownAction(String),
    #[error("cannot vote over an empty list")]
    EmptyVote,
    #[error("invalid agent spec `{agent}`: {reason}")]
    InvalidAgent { agent: String, reason: String },
    #[error("invalid protocol config: {0}")]
    InvalidConfig(String),
    #[error("scripted agent file error: {0}")]
    Script(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TradeAction {
    Buy,
    Sell,
    Hold,
}

impl TradeAction {
    pub const ALL: [TradeAction; 3] = [TradeAction::Buy, TradeAction::Sell, TradeAction::Hold];

    pub fn signal(self) -> Signal {
        match self {
            TradeAction::Buy => Signal::Long,
            TradeAction::Sell => Signal::Short,
            TradeAction::Hold => Signal::Flat,
        }
    }

    pub fn from_signal(signal: Signal) -> Self {
        match signal {
            Signal::Long => TradeAction::Buy,
            Signal::Short => TradeAction::Sell,
            Signal::Flat => TradeAction::Hold,
        }
    }
}

impl fmt::Display for TradeAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TradeAction::Buy => "BUY",
            TradeAction::Sell => "SELL",
            TradeAction::Hold => "HOLD",
        })
    }
}

impl FromStr for TradeAction {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "buy" => Ok(TradeAction::Buy),
            "sell" => Ok(TradeAction::Sell),
            "hold" => Ok(TradeAction::Hold),
            other => Err(ProtocolError::UnknownAction(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    WarmUp,
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentFramework {
    BuyAndHold,
    AlwaysHold,
    Scripted,
    GenericLLM,
    VoteEnsemble,
}

pub const DEFAULT_STRATEGY: &str = "Baseline";

fn default_strategy() -> String {
    DEFAULT_STRATEGY.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    /// Display name on the leaderboard's agent axis, e.g. `InvestorAgent`.
    pub name: String,
    pub framework: AgentFramework,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone: Option<String>,
    #[serde(default = "default_strategy")]
    pub strategy: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<AgentSpec>,
}

impl AgentSpec {
    pub fn new(name: impl Into<String>, framework: AgentFramework) -> Self {
        Self {
            name: name.into(),
            framework,
            backbone: None,
            strategy: default_strategy(),
            params: BTreeMap::new(),
            members: Vec::new(),
        }
    }

    pub fn llm(name: impl Into<String>, backbone: impl Into<String>) -> Self {
        Self {
            backbone: Some(backbone.into()),
            ..Self::new(name, AgentFramework::GenericLLM)
        }
    }

    pub fn vote(name: impl Into<String>, members: Vec<AgentSpec>) -> Self {
        Self {
            members,
            ..Self::new(name, AgentFramework::VoteEnsemble)
        }
    }

    /// Value on the leaderboard's model axis.
    pub fn model_label(&self) -> String {
        match (&self.backbone, self.framework) {
            (Some(b), _) => b.clone(),
            (None, AgentFramework::VoteEnsemble) => "Vote".to_string(),
            (None, _) => "-".to_string(),
        }
    }

    /// Unique key of the agent within a run.
    pub fn id(&self) -> String {
        let mut id = match self.model_label().as_str() {
            "-" => self.name.clone(),
            model => format!("{}:{}", self.name, model),
        };
        if self.strategy != DEFAULT_STRATEGY {
            id.push('#');
            id.push_str(&self.strategy);
        }
        id
    }

    pub fn label(&self) -> AgentLabel {
        AgentLabel {
            id: self.id(),
            name: self.name.clone(),
            model: self.model_label(),
            strategy: self.strategy.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let invalid = |reason: &str| ProtocolError::InvalidAgent {
            agent: self.id(),
            reason: reason.to_string(),
        };
        if self.name.trim().is_empty() {
            return Err(invalid("name must be non-empty"));
        }
        match self.framework {
            AgentFramework::GenericLLM if self.backbone.as_deref().is_none_or(|b| b.trim().is_empty()) => {
                Err(invalid("GenericLLM requires a backbone"))
            }
            AgentFramework::VoteEnsemble if self.members.is_empty() => {
                Err(invalid("VoteEnsemble requires at least one member"))
            }
            AgentFramework::VoteEnsemble => self.members.iter().try_for_each(AgentSpec::validate),
            _ => Ok(()),
        }
    }
}

/// The identity fields carried on fills and snapshots.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentLabel {
    pub id: String,
    pub name: String,
    pub model: String,
    pub strategy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextMeta {
    pub run_id: String,
    pub phase: Phase,
}

/// Everything an agent sees for one (asset, date). Market fields are
/// identical for every agent; only `recent_actions` is per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyContext {
    pub asset: AssetId,
    pub date: NaiveDate,
    pub price_history: Vec<PriceBar>,
    pub brief: Option<DailyBrief>,
    pub recent_actions: Vec<DecisionRecord>,
    pub metadata: ContextMeta,
}

impl DailyContext {
    /// SHA-256 over the shared market fields, hex encoded.
    pub fn market_digest(&self) -> String {
        #[derive(Serialize)]
        struct View<'a> {
            asset: &'a AssetId,
            date: NaiveDate,
            price_history: &'a [PriceBar],
            brief: &'a Option<DailyBrief>,
            metadata: &'a ContextMeta,
        }
        let bytes = serde_json::to_vec(&View {
            asset: &self.asset,
            date: self.date,
            price_history: &self.price_history,
            brief: &self.brief,
            metadata: &self.metadata,
        })
        .expect("context serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub agent: AgentSpec,
    pub asset: AssetId,
    pub date: NaiveDate,
    pub phase: Phase,
    /// Absent when every LLM attempt failed to parse.
    pub action: Option<TradeAction>,
    pub attempts: u32,
    pub raw_reply: Option<String>,
    pub latency_ms: u64,
    #[serde(default)]
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub member_actions: Vec<(String, TradeAction)>,
}

impl DecisionRecord {
    /// The action used for accounting: failures count as HOLD.
    pub fn accounted_action(&self) -> TradeAction {
        self.action.unwrap_or(TradeAction::Hold)
    }
}

fn default_temperature() -> f64 {
    0.5
}
fn default_retry_limit() -> u32 {
    3
}
fn default_warmup_days() -> u32 {
    90
}
fn default_memory_size() -> usize {
    7
}
fn default_decision_time() -> NaiveTime {
    NaiveTime::MIN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_warmup_days")]
    pub warmup_days: u32,
    #[serde(default = "default_memory_size")]
    pub memory_size: usize,
    /// Time of day (UTC) at which decisions are taken.
    #[serde(default = "default_decision_time")]
    pub decision_time: NaiveTime,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            temperature: default_temperature(),
            retry_limit: default_retry_limit(),
            warmup_days: default_warmup_days(),
            memory_size: default_memory_size(),
            decision_time: default_decision_time(),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.memory_size < 1 {
            return Err(ProtocolError::InvalidConfig("memory_size must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProtocolError::InvalidConfig(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }
}
