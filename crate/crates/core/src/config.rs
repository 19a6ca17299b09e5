//! Run configuration (TOML) and its translation into a session plan, the
//! market data store, and a replay environment over recorded replies.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::PeriodsPerYear;
use crate::briefing::{BriefStore, SummarizerSettings};
use crate::clock::FixedClock;
use crate::ledger::FeeModel;
use crate::marketdata::{
    normalize_prices, read_news_jsonl, read_price_csv, AssetClass, AssetId, AssetRegistry, PriceIndex, SourcePriority,
};
use crate::protocol::{AgentFramework, AgentSpec, MarketData, ProtocolConfig, Providers, ScriptBook, SessionEnv, SessionPlan};
use crate::provider::{CompletionProvider, RecordedReplies};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("invalid config {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("data error: {0}")]
    Data(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetConfig {
    pub symbol: String,
    pub class: AssetClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Price CSVs (`symbol,date,close,source`), relative to the config file.
    #[serde(default)]
    pub prices: Vec<PathBuf>,
    /// News JSONL files.
    #[serde(default)]
    pub news: Vec<PathBuf>,
    /// Directory of stored briefs, `<dir>/<SYMBOL>/<date>`.
    #[serde(default)]
    pub briefs: Option<PathBuf>,
    /// Recorded replies, `<dir>/<agent>/<symbol>/<date>/<attempt>.txt`.
    #[serde(default = "default_replies")]
    pub replies: PathBuf,
    /// Preferred price sources, best first.
    #[serde(default)]
    pub source_priority: Vec<String>,
    /// HTTP feeds polled by the live runner.
    #[serde(default)]
    pub feeds: Vec<FeedConfig>,
}

/// An HTTP feed serving `GET <base_url>/prices` (price CSV) and
/// `GET <base_url>/news` (news JSONL), both filtered by `symbol`, `start`
/// and `end` query parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedConfig {
    pub source: String,
    pub base_url: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_replies() -> PathBuf {
    PathBuf::from("replies")
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            prices: Vec::new(),
            news: Vec::new(),
            briefs: None,
            replies: default_replies(),
            source_priority: Vec::new(),
            feeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Reads replies from the recorded-replies directory.
    Recorded,
    /// An OpenAI-compatible chat completions endpoint.
    OpenaiCompatible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    /// Backbone id as used by agents; `*` matches any model.
    pub model: String,
    pub kind: ProviderKind,
    #[serde(default)]
    pub base_url: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Model name sent to the endpoint, when it differs from `model`.
    #[serde(default)]
    pub remote_model: Option<String>,
    /// Also write every reply to the recorded-replies directory.
    #[serde(default)]
    pub record: bool,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummarizerConfig {
    /// Provider model used for summaries.
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_retry")]
    pub retry_limit: u32,
}

fn default_temperature() -> f64 {
    0.5
}
fn default_retry() -> u32 {
    3
}

impl SummarizerConfig {
    pub fn settings(&self) -> SummarizerSettings {
        SummarizerSettings {
            model: self.model.clone(),
            temperature: self.temperature,
            retry_limit: self.retry_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub assets: Vec<AssetConfig>,
    pub agents: Vec<AgentSpec>,
    /// Defaults to `live_start` minus `protocol.warmup_days` calendar days.
    #[serde(default)]
    pub warmup_start: Option<NaiveDate>,
    pub live_start: NaiveDate,
    pub end: NaiveDate,
    #[serde(default)]
    pub holidays: BTreeSet<NaiveDate>,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub fee_bps: f64,
    #[serde(default)]
    pub periods_per_year: PeriodsPerYear,
    #[serde(default)]
    pub risk_free: f64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub providers: Vec<ProviderConfig>,
    #[serde(default)]
    pub summarizer: Option<SummarizerConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })?;
        cfg.plan()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The four-asset run with a May–July warm-up, August–September live
    /// window and the 2025 US market holidays in that span.
    pub fn paper_default() -> Self {
        let date = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).expect("valid date");
        let asset = |s: &str, class| AssetConfig {
            symbol: s.into(),
            class,
        };
        RunConfig {
            run_id: "arena-2025".into(),
            assets: vec![
                asset("TSLA", AssetClass::Equity),
                asset("BMRN", AssetClass::Equity),
                asset("BTC", AssetClass::Crypto),
                asset("ETH", AssetClass::Crypto),
            ],
            agents: vec![
                AgentSpec::new("Buy&Hold", AgentFramework::BuyAndHold),
                AgentSpec::new("AlwaysHold", AgentFramework::AlwaysHold),
            ],
            warmup_start: Some(date(2025, 5, 1)),
            live_start: date(2025, 8, 1),
            end: date(2025, 9, 30),
            holidays: [date(2025, 5, 26), date(2025, 6, 19), date(2025, 7, 4), date(2025, 9, 1)]
                .into_iter()
                .collect(),
            protocol: ProtocolConfig::default(),
            fee_bps: 0.0,
            periods_per_year: PeriodsPerYear::default(),
            risk_free: 0.0,
            data: DataConfig::default(),
            providers: Vec::new(),
            summarizer: None,
        }
    }

    pub fn warmup_start(&self) -> NaiveDate {
        self.warmup_start
            .unwrap_or(self.live_start - Duration::days(i64::from(self.protocol.warmup_days)))
    }

    pub fn asset_ids(&self) -> Result<Vec<AssetId>, ConfigError> {
        self.assets
            .iter()
            .map(|a| AssetId::new(&a.symbol, a.class).map_err(|e| ConfigError::Invalid(e.to_string())))
            .collect()
    }

    pub fn registry(&self) -> Result<AssetRegistry, ConfigError> {
        Ok(AssetRegistry::new(self.asset_ids()?))
    }

    pub fn plan(&self) -> Result<SessionPlan, ConfigError> {
        let plan = SessionPlan {
            run_id: self.run_id.clone(),
            assets: self.asset_ids()?,
            agents: self.agents.clone(),
            warmup_start: self.warmup_start(),
            live_start: self.live_start,
            end: self.end,
            holidays: self.holidays.clone(),
            protocol: self.protocol.clone(),
            fees: FeeModel::new(self.fee_bps).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            periods_per_year: self.periods_per_year,
            risk_free: self.risk_free,
        };
        plan.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(plan)
    }

    /// Loads prices, news and stored briefs named in `[data]`, resolving
    /// paths against `base`. Rejected price rows are logged and skipped.
    pub fn load_market(&self, base: &Path) -> Result<MarketData, ConfigError> {
        let registry = self.registry()?;
        let data_err = |e: &dyn std::fmt::Display| ConfigError::Data(e.to_string());
        let mut raws = Vec::new();
        for p in &self.data.prices {
            raws.extend(read_price_csv(&base.join(p)).map_err(|e| data_err(&e))?);
        }
        let batch = normalize_prices(&raws, &registry, &SourcePriority::new(self.data.source_priority.clone()));
        for r in &batch.rejected {
            tracing::warn!(error = %r, "rejected price row");
        }
        let mut news = Vec::new();
        for p in &self.data.news {
            news.extend(read_news_jsonl(&base.join(p), &registry).map_err(|e| data_err(&e))?);
        }
        let mut market = MarketData {
            prices: PriceIndex::new(batch.bars),
            briefs: Default::default(),
            news,
        };
        if let Some(dir) = &self.data.briefs {
            let store = BriefStore::new(base.join(dir));
            for asset in registry.iter() {
                let mut day = self.warmup_start();
                while day <= self.end {
                    if let Some(b) = store.get(asset.symbol(), day).map_err(|e| data_err(&e))? {
                        market.briefs.insert((asset.symbol().to_string(), day), b);
                    }
                    day += Duration::days(1);
                }
            }
        }
        Ok(market)
    }

    pub fn scripts(&self, base: &Path) -> Result<ScriptBook, ConfigError> {
        ScriptBook::load(&self.agents, base).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn replies_dir(&self, base: &Path) -> PathBuf {
        base.join(&self.data.replies)
    }

    /// An environment that answers every model (and the summarizer, when
    /// configured) from recorded replies, on a fixed clock.
    pub fn replay_env(&self, base: &Path) -> Result<SessionEnv, ConfigError> {
        let recorded: Arc<dyn CompletionProvider> = Arc::new(RecordedReplies::new(self.replies_dir(base)));
        Ok(SessionEnv {
            providers: Providers::uniform(recorded.clone()),
            summarizer: self.summarizer.as_ref().map(|s| (recorded.clone(), s.settings())),
            scripts: self.scripts(base)?,
            clock: Arc::new(FixedClock::default()),
        })
    }
}
