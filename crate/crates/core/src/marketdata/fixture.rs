use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::{news_id, AssetRegistry, MarketDataError, NewsItem, RawPrice};

#[derive(Debug, Serialize, Deserialize)]
struct PriceRow {
    symbol: String,
    date: NaiveDate,
    close: f64,
    source: String,
}

/// Parses `symbol,date,close,source` CSV text.
pub fn parse_price_csv(text: &str) -> Result<Vec<RawPrice>, MarketDataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["symbol", "date", "close", "source"] {
        return Err(malformed(1, format!("unexpected header {:?}", headers)));
    }
    reader
        .deserialize::<PriceRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| malformed(i + 2, e.to_string()))?;
            Ok(RawPrice {
                symbol: row.symbol,
                date: row.date,
                close: row.close,
                source: row.source,
            })
        })
        .collect()
}

pub fn read_price_csv(path: &Path) -> Result<Vec<RawPrice>, MarketDataError> {
    parse_price_csv(&fs::read_to_string(path)?)
}

pub fn write_price_csv(path: &Path, rows: &[RawPrice]) -> Result<(), MarketDataError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| MarketDataError::Io(e.to_string()))?;
    for r in rows {
        writer
            .serialize(PriceRow {
                symbol: r.symbol.clone(),
                date: r.date,
                close: r.close,
                source: r.source.clone(),
            })
            .map_err(|e| MarketDataError::Io(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct NewsRow {
    #[serde(default)]
    id: String,
    symbol: String,
    published: DateTime<Utc>,
    title: String,
    body: String,
    source: String,
    url: String,
}

/// Parses line-delimited JSON news records. An empty `id` is filled in
/// from the content hash; a non-empty one must equal it.
pub fn parse_news_jsonl(text: &str, registry: &AssetRegistry) -> Result<Vec<NewsItem>, MarketDataError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: NewsRow = serde_json::from_str(line).map_err(|e| malformed(i + 1, e.to_string()))?;
        let computed = news_id(&row.url, &row.title, &row.body);
        if !row.id.is_empty() && row.id != computed {
            return Err(MarketDataError::NewsIdMismatch {
                given: row.id,
                computed,
            });
        }
        out.push(NewsItem {
            id: computed,
            asset: registry.resolve(&row.symbol)?.clone(),
            published: row.published,
            title: row.title,
            body: row.body,
            source: row.source,
            url: row.url,
        });
    }
    Ok(out)
}

pub fn read_news_jsonl(path: &Path, registry: &AssetRegistry) -> Result<Vec<NewsItem>, MarketDataError> {
    parse_news_jsonl(&fs::read_to_string(path)?, registry)
}

pub fn write_news_jsonl(path: &Path, items: &[NewsItem]) -> Result<(), MarketDataError> {
    let mut file = fs::File::create(path)?;
    for item in items {
        let row = NewsRow {
            id: item.id.clone(),
            symbol: item.asset.symbol().to_string(),
            published: item.published,
            title: item.title.clone(),
            body: item.body.clone(),
            source: item.source.clone(),
            url: item.url.clone(),
        };
        let line = serde_json::to_string(&row).map_err(|e| MarketDataError::Io(e.to_string()))?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}

fn malformed(line: usize, reason: String) -> MarketDataError {
    MarketDataError::Malformed { line, reason }
}
