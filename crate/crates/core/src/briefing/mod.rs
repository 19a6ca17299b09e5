//! Daily per-asset news briefs: the summarization prompt, the pluggable
//! summarizer call, label extraction, and the on-disk brief store.

pub mod qc;

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::{dedupe_news, AssetId, NewsItem};
use crate::provider::{CompletionProvider, CompletionRequest, RequestTag};

#[derive(Debug, Error)]
pub enum BriefError {
    #[error("brief store io error at {path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("malformed brief record at {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sentiment {
    Bullish,
    Neutral,
    Bearish,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyBrief {
    pub asset: AssetId,
    pub date: NaiveDate,
    pub summary: String,
    pub themes: Vec<String>,
    pub sentiment_label: Sentiment,
    pub source_item_ids: Vec<String>,
}

impl DailyBrief {
    /// Brief for a day with no articles.
    pub fn empty(asset: AssetId, date: NaiveDate) -> Self {
        Self {
            asset,
            date,
            summary: String::new(),
            themes: Vec::new(),
            sentiment_label: Sentiment::Neutral,
            source_item_ids: Vec::new(),
        }
    }
}

const SUMMARY_TEMPLATE: &str = "\
Task: Analyze the provided {symbol} news articles from {date_str} and produce a clear, comprehensive, and well-structured summary.

Instructions:
- Use only the provided articles for your analysis.
- Do not retrieve or reference any external information.
- Refrain from including current prices or speculative forecasts.
- Focus strictly on the events, sentiment, and contextual details presented in the articles.
- Do not mention or enumerate article IDs in the output.

Articles from {date_str}:

{articles_text}

Output Requirements:
1. Provide a cohesive summary highlighting the key developments for {symbol}.
2. Identify major themes or emerging narratives within the content.
3. Assess and articulate the overall market sentiment reflected in the articles.

Compose your response as a coherent and polished narrative that maintains logical flow and clarity throughout.
";

const NO_NEWS_TEMPLATE: &str = "\
Task: No {symbol} news articles were collected for {date_str}.

Instructions:
- State plainly that there is no material news for {symbol} on {date_str}.
- Do not retrieve or reference any external information.
- Refrain from including current prices or speculative forecasts.
";

const LABEL_INSTRUCTIONS: &str = "
End your response with exactly two lines:
Themes: <theme>; <theme>; ...
Sentiment: Bullish | Neutral | Bearish
";

/// Renders the summarization prompt. Articles are de-duplicated and
/// rendered in `(published, id)` order.
pub fn build_summary_prompt(symbol: &str, date: NaiveDate, articles: &[NewsItem]) -> String {
    let date_str = date.format("%Y-%m-%d").to_string();
    let articles = dedupe_news(articles);
    let template = if articles.is_empty() {
        NO_NEWS_TEMPLATE
    } else {
        SUMMARY_TEMPLATE
    };
    let articles_text = articles
        .iter()
        .map(|a| format!("{}\n{}", a.title, a.body))
        .collect::<Vec<_>>()
        .join("\n\n");
    let mut prompt = template
        .replace("{symbol}", symbol)
        .replace("{date_str}", &date_str);
    // Substitute article text last so braces inside bodies are left alone.
    prompt = prompt.replacen("{articles_text}", &articles_text, 1);
    if !articles.is_empty() {
        prompt.push_str(LABEL_INSTRUCTIONS);
    }
    prompt
}

/// Reads the last `Sentiment:` line of a reply. Missing or unknown → Neutral.
pub fn extract_sentiment(reply: &str) -> Sentiment {
    labelled_line(reply, "sentiment")
        .and_then(|value| {
            let word = value
                .trim_matches(|c: char| !c.is_alphanumeric())
                .to_ascii_lowercase();
            match word.as_str() {
                "bullish" => Some(Sentiment::Bullish),
                "bearish" => Some(Sentiment::Bearish),
                "neutral" => Some(Sentiment::Neutral),
                _ => None,
            }
        })
        .unwrap_or(Sentiment::Neutral)
}

pub fn extract_themes(reply: &str) -> Vec<String> {
    let Some(value) = labelled_line(reply, "themes") else {
        return Vec::new();
    };
    let sep = if value.contains(';') { ';' } else { ',' };
    value
        .split(sep)
        .map(|t| t.trim().trim_matches('*').trim().to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

fn labelled_line<'a>(reply: &'a str, label: &str) -> Option<&'a str> {
    reply.lines().rev().find_map(|line| {
        let stripped = line.trim().trim_start_matches(['*', '#', '-', ' ']);
        let (head, rest) = stripped.split_once(':')?;
        head.trim_matches(['*', ' '])
            .eq_ignore_ascii_case(label)
            .then_some(rest)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummarizerSettings {
    pub model: String,
    pub temperature: f64,
    pub retry_limit: u32,
}

impl Default for SummarizerSettings {
    fn default() -> Self {
        Self {
            model: "summarizer".into(),
            temperature: 0.5,
            retry_limit: 3,
        }
    }
}

/// Agent name under which summarizer calls are tagged and recorded.
pub const SUMMARIZER_AGENT: &str = "summarizer";

#[derive(Debug, Clone, PartialEq)]
pub struct BriefOutcome {
    /// `None` when the summarizer failed on every attempt.
    pub brief: Option<DailyBrief>,
    pub raw_reply: Option<String>,
    pub attempts: u32,
    pub error: Option<String>,
}

pub fn summarize_day(
    asset: &AssetId,
    date: NaiveDate,
    articles: &[NewsItem],
    summarizer: &dyn CompletionProvider,
    settings: &SummarizerSettings,
) -> BriefOutcome {
    let articles = dedupe_news(articles);
    if articles.is_empty() {
        return BriefOutcome {
            brief: Some(DailyBrief::empty(asset.clone(), date)),
            raw_reply: None,
            attempts: 0,
            error: None,
        };
    }
    let request = CompletionRequest {
        model: settings.model.clone(),
        system: String::new(),
        user: build_summary_prompt(asset.symbol(), date, &articles),
        temperature: settings.temperature,
    };
    let mut last_error = None;
    for attempt in 1..=settings.retry_limit + 1 {
        let tag = RequestTag {
            agent: SUMMARIZER_AGENT.into(),
            symbol: asset.symbol().to_string(),
            date,
            attempt,
        };
        match summarizer.complete(&tag, &request) {
            Ok(reply) if !reply.trim().is_empty() => {
                return BriefOutcome {
                    brief: Some(DailyBrief {
                        asset: asset.clone(),
                        date,
                        themes: extract_themes(&reply),
                        sentiment_label: extract_sentiment(&reply),
                        summary: reply.clone(),
                        source_item_ids: articles.iter().map(|a| a.id.clone()).collect(),
                    }),
                    raw_reply: Some(reply),
                    attempts: attempt,
                    error: None,
                }
            }
            Ok(_) => last_error = Some("empty reply".to_string()),
            Err(e) => last_error = Some(e.to_string()),
        }
    }
    BriefOutcome {
        brief: None,
        raw_reply: None,
        attempts: settings.retry_limit + 1,
        error: last_error,
    }
}

/// The instant after which news no longer counts toward `date`'s brief.
pub fn decision_cutoff(date: NaiveDate, decision_time: NaiveTime) -> DateTime<Utc> {
    date.and_time(decision_time).and_utc()
}

/// News assigned to trading date `date`: published in
/// `[cutoff(previous), cutoff(date))`, where `previous` is the prior
/// calendar entry (or the day before when there is none).
pub fn select_news(
    items: &[NewsItem],
    asset: &AssetId,
    previous: Option<NaiveDate>,
    date: NaiveDate,
    decision_time: NaiveTime,
) -> Vec<NewsItem> {
    let start = decision_cutoff(previous.unwrap_or(date - chrono::Duration::days(1)), decision_time);
    let end = decision_cutoff(date, decision_time);
    let selected: Vec<NewsItem> = items
        .iter()
        .filter(|n| &n.asset == asset && n.published >= start && n.published < end)
        .cloned()
        .collect();
    dedupe_news(&selected)
}

/// Briefs stored as one JSON record per file at `<root>/<symbol>/<date>`.
#[derive(Debug, Clone)]
pub struct BriefStore {
    root: PathBuf,
}

impl BriefStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path_for(&self, symbol: &str, date: NaiveDate) -> PathBuf {
        self.root.join(symbol).join(date.to_string())
    }

    pub fn put(&self, brief: &DailyBrief) -> Result<(), BriefError> {
        let path = self.path_for(brief.asset.symbol(), brief.date);
        let io = |e: std::io::Error| BriefError::Io {
            path: path.clone(),
            reason: e.to_string(),
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let text = serde_json::to_string_pretty(brief).expect("brief serializes");
        fs::write(&path, text + "\n").map_err(io)
    }

    pub fn get(&self, symbol: &str, date: NaiveDate) -> Result<Option<DailyBrief>, BriefError> {
        let path = self.path_for(symbol, date);
        read_brief(&path)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

fn read_brief(path: &Path) -> Result<Option<DailyBrief>, BriefError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => {
            return Err(BriefError::Io {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })
        }
    };
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| BriefError::Malformed {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}
