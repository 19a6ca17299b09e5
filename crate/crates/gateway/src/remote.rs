//! Network adapters: an HTTP market-data feed and an OpenAI-compatible chat
//! completions provider. Both use blocking clients and must run off the
//! async runtime.

use std::time::Duration;

use arena_core::config::{FeedConfig, ProviderConfig};
use arena_core::marketdata::{
    parse_news_jsonl, parse_price_csv, AssetId, AssetRegistry, Connector, MarketDataError, NewsItem, RawPrice,
};
use arena_core::provider::{CompletionProvider, CompletionRequest, ProviderError, RequestTag};
use chrono::NaiveDate;
use reqwest::blocking::Client;
use serde_json::json;

use crate::GatewayError;

fn read_key(var: Option<&str>) -> Option<String> {
    var.and_then(|name| std::env::var(name).ok()).filter(|k| !k.is_empty())
}

fn client(timeout_secs: u64) -> Result<Client, GatewayError> {
    Client::builder()
        .timeout(Duration::from_secs(timeout_secs))
        .build()
        .map_err(|e| GatewayError::Registry(format!("http client: {e}")))
}

/// Feed serving the fixture formats over HTTP.
pub struct HttpFeedConnector {
    source: String,
    base_url: String,
    api_key: Option<String>,
    registry: AssetRegistry,
    client: Client,
}

impl HttpFeedConnector {
    pub fn from_config(cfg: &FeedConfig, registry: AssetRegistry) -> Result<Self, GatewayError> {
        Ok(Self {
            source: cfg.source.clone(),
            base_url: cfg.base_url.trim_end_matches('/').to_string(),
            api_key: read_key(cfg.api_key_env.as_deref()),
            registry,
            client: client(cfg.timeout_secs)?,
        })
    }

    fn get(&self, what: &str, asset: &AssetId, start: NaiveDate, end: NaiveDate) -> Result<String, MarketDataError> {
        let fail = |reason: String| MarketDataError::Connector {
            source_tag: self.source.clone(),
            reason,
        };
        let mut req = self.client.get(format!("{}/{what}", self.base_url)).query(&[
            ("symbol", asset.symbol().to_string()),
            ("start", start.to_string()),
            ("end", end.to_string()),
        ]);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| fail(e.without_url().to_string()))?;
        if !resp.status().is_success() {
            return Err(fail(format!("{what}: HTTP {}", resp.status())));
        }
        resp.text().map_err(|e| fail(e.without_url().to_string()))
    }
}

impl Connector for HttpFeedConnector {
    fn source(&self) -> &str {
        &self.source
    }

    fn fetch_prices(&self, asset: &AssetId, start: NaiveDate, end: NaiveDate) -> Result<Vec<RawPrice>, MarketDataError> {
        let rows = parse_price_csv(&self.get("prices", asset, start, end)?)?;
        Ok(rows
            .into_iter()
            .filter(|r| r.symbol.eq_ignore_ascii_case(asset.symbol()) && r.date >= start && r.date <= end)
            .collect())
    }

    fn fetch_news(&self, asset: &AssetId, start: NaiveDate, end: NaiveDate) -> Result<Vec<NewsItem>, MarketDataError> {
        let items = parse_news_jsonl(&self.get("news", asset, start, end)?, &self.registry)?;
        Ok(items
            .into_iter()
            .filter(|n| &n.asset == asset && (start..=end).contains(&n.published.date_naive()))
            .collect())
    }
}

/// POSTs to `<base_url>/chat/completions` and returns the first choice.
pub struct OpenAiProvider {
    base_url: String,
    api_key: Option<String>,
    remote_model: Option<String>,
    client: Client,
}

impl OpenAiProvider {
    pub fn from_config(cfg: &ProviderConfig) -> Result<Self, GatewayError> {
        let base_url = cfg.base_url.clone().ok_or_else(|| {
            GatewayError::Registry(format!("provider `{}` needs a base_url", cfg.model))
        })?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: read_key(cfg.api_key_env.as_deref()),
            remote_model: cfg.remote_model.clone(),
            client: client(cfg.timeout_secs)?,
        })
    }
}

impl CompletionProvider for OpenAiProvider {
    fn complete(&self, _tag: &RequestTag, request: &CompletionRequest) -> Result<String, ProviderError> {
        let mut messages = Vec::new();
        if !request.system.is_empty() {
            messages.push(json!({"role": "system", "content": request.system}));
        }
        messages.push(json!({"role": "user", "content": request.user}));
        let body = json!({
            "model": self.remote_model.as_deref().unwrap_or(&request.model),
            "temperature": request.temperature,
            "messages": messages,
        });
        let mut req = self.client.post(format!("{}/chat/completions", self.base_url)).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let unavailable = |m: String| ProviderError::Unavailable(m);
        let resp = req.send().map_err(|e| unavailable(e.without_url().to_string()))?;
        if !resp.status().is_success() {
            return Err(unavailable(format!("HTTP {}", resp.status())));
        }
        let value: serde_json::Value = resp.json().map_err(|e| unavailable(e.without_url().to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| unavailable("response has no choices[0].message.content".into()))
    }
}
