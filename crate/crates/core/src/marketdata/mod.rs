//! Price and news acquisition: canonical types, normalization, news
//! de-duplication, and per-asset-class trading calendars.

mod connector;
mod fixture;

pub use connector::{fetch_all, Connector, FetchBatch, FixtureConnector};
pub use fixture::{
    parse_news_jsonl, parse_price_csv, read_news_jsonl, read_price_csv, write_news_jsonl,
    write_price_csv,
};

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use chrono::{DateTime, Datelike, NaiveDate, Utc, Weekday};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketDataError {
    #[error("invalid close {close} for {symbol} on {date} from source `{source_tag}`")]
    InvalidClose {
        symbol: String,
        date: NaiveDate,
        close: f64,
        source_tag: String,
    },
    #[error("asset symbol must be non-empty")]
    EmptySymbol,
    #[error("unknown asset `{0}`")]
    UnknownAsset(String),
    #[error("calendar range start {start} is after end {end}")]
    Range { start: NaiveDate, end: NaiveDate },
    #[error("news item id `{given}` does not match content hash `{computed}`")]
    NewsIdMismatch { given: String, computed: String },
    #[error("news item {id} published at {published} is after ingestion time {ingested}")]
    FutureNews {
        id: String,
        published: DateTime<Utc>,
        ingested: DateTime<Utc>,
    },
    #[error("malformed record at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("connector `{source_tag}` failed: {reason}")]
    Connector { source_tag: String, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for MarketDataError {
    fn from(err: std::io::Error) -> Self {
        MarketDataError::Io(err.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AssetClass {
    Equity,
    Crypto,
}

impl fmt::Display for AssetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssetClass::Equity => f.write_str("Equity"),
            AssetClass::Crypto => f.write_str("Crypto"),
        }
    }
}

/// A tradable symbol together with its asset class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AssetId {
    symbol: String,
    asset_class: AssetClass,
}

impl AssetId {
    /// Builds an asset id, canonicalizing the symbol to trimmed upper case.
    pub fn new(symbol: &str, asset_class: AssetClass) -> Result<Self, MarketDataError> {
        let symbol = canonical_symbol(symbol)?;
        Ok(Self {
            symbol,
            asset_class,
        })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn asset_class(&self) -> AssetClass {
        self.asset_class
    }
}

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.symbol)
    }
}

pub fn canonical_symbol(symbol: &str) -> Result<String, MarketDataError> {
    let symbol = symbol.trim().to_uppercase();
    if symbol.is_empty() {
        return Err(MarketDataError::EmptySymbol);
    }
    Ok(symbol)
}

/// Symbol → asset class lookup for one run. A symbol has exactly one class.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssetRegistry {
    assets: BTreeMap<String, AssetId>,
}

impl AssetRegistry {
    pub fn new(assets: impl IntoIterator<Item = AssetId>) -> Self {
        Self {
            assets: assets
                .into_iter()
                .map(|a| (a.symbol().to_string(), a))
                .collect(),
        }
    }

    pub fn resolve(&self, symbol: &str) -> Result<&AssetId, MarketDataError> {
        let canonical = canonical_symbol(symbol)?;
        self.assets
            .get(&canonical)
            .ok_or(MarketDataError::UnknownAsset(canonical))
    }

    pub fn iter(&self) -> impl Iterator<Item = &AssetId> {
        self.assets.values()
    }
}

/// One asset's closing price for one trading period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub asset: AssetId,
    pub date: NaiveDate,
    pub close: f64,
    pub source: String,
}

/// A price record as delivered by a source, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPrice {
    pub symbol: String,
    pub date: NaiveDate,
    pub close: f64,
    pub source: String,
}

/// Ranking of sources used to resolve duplicate (asset, date) prices.
/// Earlier entries win. Unlisted sources rank after all listed ones,
/// ordered among themselves by name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcePriority(Vec<String>);

impl SourcePriority {
    pub fn new<S: Into<String>>(sources: impl IntoIterator<Item = S>) -> Self {
        Self(sources.into_iter().map(Into::into).collect())
    }

    fn rank<'a>(&self, source: &'a str) -> (usize, &'a str) {
        match self.0.iter().position(|s| s == source) {
            Some(i) => (i, ""),
            None => (self.0.len(), source),
        }
    }

    /// `Less` means `a` outranks `b`.
    pub fn compare(&self, a: &str, b: &str) -> Ordering {
        self.rank(a).cmp(&self.rank(b))
    }
}

pub fn normalize_price(raw: &RawPrice, registry: &AssetRegistry) -> Result<PriceBar, MarketDataError> {
    if !raw.close.is_finite() || raw.close <= 0.0 {
        return Err(MarketDataError::InvalidClose {
            symbol: raw.symbol.clone(),
            date: raw.date,
            close: raw.close,
            source_tag: raw.source.clone(),
        });
    }
    let asset = registry.resolve(&raw.symbol)?.clone();
    Ok(PriceBar {
        asset,
        date: raw.date,
        close: raw.close,
        source: raw.source.clone(),
    })
}

/// Result of normalizing a batch: surviving bars in (symbol, date) order
/// plus every record that failed validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormalizedBatch {
    pub bars: Vec<PriceBar>,
    pub rejected: Vec<MarketDataError>,
}

pub fn normalize_prices(
    raws: &[RawPrice],
    registry: &AssetRegistry,
    priority: &SourcePriority,
) -> NormalizedBatch {
    let mut best: BTreeMap<(String, NaiveDate), PriceBar> = BTreeMap::new();
    let mut rejected = Vec::new();
    for raw in raws {
        let bar = match normalize_price(raw, registry) {
            Ok(bar) => bar,
            Err(err) => {
                rejected.push(err);
                continue;
            }
        };
        let key = (bar.asset.symbol().to_string(), bar.date);
        match best.get(&key) {
            Some(existing) if priority.compare(&existing.source, &bar.source) != Ordering::Greater => {}
            _ => {
                best.insert(key, bar);
            }
        }
    }
    NormalizedBatch {
        bars: best.into_values().collect(),
        rejected,
    }
}

/// A raw article attributed to one asset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsItem {
    pub id: String,
    pub asset: AssetId,
    pub published: DateTime<Utc>,
    pub title: String,
    pub body: String,
    pub source: String,
    pub url: String,
}

impl NewsItem {
    pub fn new(
        asset: AssetId,
        published: DateTime<Utc>,
        title: impl Into<String>,
        body: impl Into<String>,
        source: impl Into<String>,
        url: impl Into<String>,
    ) -> Self {
        let (title, body, url) = (title.into(), body.into(), url.into());
        Self {
            id: news_id(&url, &title, &body),
            asset,
            published,
            title,
            body,
            source: source.into(),
            url,
        }
    }
}

/// Content hash identifying an article: the first 16 bytes of
/// SHA-256 over `url \x1f title \x1f body`, hex encoded.
pub fn news_id(url: &str, title: &str, body: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(url.as_bytes());
    hasher.update([0x1f]);
    hasher.update(title.as_bytes());
    hasher.update([0x1f]);
    hasher.update(body.as_bytes());
    hex::encode(&hasher.finalize()[..16])
}

/// Keeps the first occurrence of every id and orders the survivors by
/// `(published, id)`.
pub fn dedupe_news(items: &[NewsItem]) -> Vec<NewsItem> {
    let mut seen = HashSet::new();
    let mut out: Vec<NewsItem> = items
        .iter()
        .filter(|item| seen.insert(item.id.as_str()))
        .cloned()
        .collect();
    out.sort_by(|a, b| a.published.cmp(&b.published).then_with(|| a.id.cmp(&b.id)));
    out
}

/// Rejects items dated after `ingested`.
pub fn check_ingestion_time(item: &NewsItem, ingested: DateTime<Utc>) -> Result<(), MarketDataError> {
    if item.published > ingested {
        return Err(MarketDataError::FutureNews {
            id: item.id.clone(),
            published: item.published,
            ingested,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradingCalendar {
    asset_class: AssetClass,
    dates: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn asset_class(&self) -> AssetClass {
        self.asset_class
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.dates.binary_search(&date).is_ok()
    }

    /// The calendar entry immediately before `date`, whether or not `date`
    /// itself is a trading date.
    pub fn previous(&self, date: NaiveDate) -> Option<NaiveDate> {
        let idx = self.dates.partition_point(|d| *d < date);
        idx.checked_sub(1).map(|i| self.dates[i])
    }
}

pub fn calendar(
    asset_class: AssetClass,
    start: NaiveDate,
    end: NaiveDate,
    holidays: &BTreeSet<NaiveDate>,
) -> Result<TradingCalendar, MarketDataError> {
    if start > end {
        return Err(MarketDataError::Range { start, end });
    }
    let dates = start
        .iter_days()
        .take_while(|d| *d <= end)
        .filter(|d| match asset_class {
            AssetClass::Crypto => true,
            AssetClass::Equity => {
                !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) && !holidays.contains(d)
            }
        })
        .collect();
    Ok(TradingCalendar { asset_class, dates })
}

/// Groups bars by symbol for quick (symbol, date) lookup.
#[derive(Debug, Clone, Default)]
pub struct PriceIndex {
    bars: HashMap<String, BTreeMap<NaiveDate, PriceBar>>,
}

impl PriceIndex {
    pub fn new(bars: impl IntoIterator<Item = PriceBar>) -> Self {
        let mut index = Self::default();
        for bar in bars {
            index.insert(bar);
        }
        index
    }

    pub fn insert(&mut self, bar: PriceBar) {
        self.bars
            .entry(bar.asset.symbol().to_string())
            .or_default()
            .insert(bar.date, bar);
    }

    pub fn get(&self, symbol: &str, date: NaiveDate) -> Option<&PriceBar> {
        self.bars.get(symbol)?.get(&date)
    }

    /// Drops every bar dated after `cutoff`.
    pub fn truncate_after(&mut self, cutoff: NaiveDate) {
        for series in self.bars.values_mut() {
            series.retain(|d, _| *d <= cutoff);
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &PriceBar> {
        self.bars.values().flat_map(|s| s.values())
    }
}
