use std::path::PathBuf;

use chrono::NaiveDate;

use super::{
    read_news_jsonl, read_price_csv, AssetId, AssetRegistry, MarketDataError, NewsItem, RawPrice,
};

/// Uniform source contract: fetch everything a source has for one asset
/// over an inclusive date range.
pub trait Connector: Send + Sync {
    fn source(&self) -> &str;

    fn fetch_prices(
        &self,
        asset: &AssetId,
        start: NaiveDate,
        end: NaiveDate,
    ) -> Result<Vec<RawPrice>, MarketDataError>;

    fn fetch_news(
        &self,
        asset: &AssetId,
        start: NaiveDate,
        end: NaiveDate,
    ) -> Result<Vec<NewsItem>, MarketDataError>;
}

/// Reads price CSV and news JSONL fixture files.
#[derive(Debug, Clone)]
pub struct FixtureConnector {
    source: String,
    prices: Option<PathBuf>,
    news: Option<PathBuf>,
    registry: AssetRegistry,
}

impl FixtureConnector {
    pub fn new(
        source: impl Into<String>,
        prices: Option<PathBuf>,
        news: Option<PathBuf>,
        registry: AssetRegistry,
    ) -> Self {
        Self {
            source: source.into(),
            prices,
            news,
            registry,
        }
    }
}

impl Connector for FixtureConnector {
    fn source(&self) -> &str {
        &self.source
    }

    fn fetch_prices(
        &self,
        asset: &AssetId,
        start: NaiveDate,
        end: NaiveDate,
    ) -> Result<Vec<RawPrice>, MarketDataError> {
        let Some(path) = &self.prices else {
            return Ok(Vec::new());
        };
        Ok(read_price_csv(path)?
            .into_iter()
            .filter(|r| {
                r.symbol.trim().eq_ignore_ascii_case(asset.symbol()) && r.date >= start && r.date <= end
            })
            .collect())
    }

    fn fetch_news(
        &self,
        asset: &AssetId,
        start: NaiveDate,
        end: NaiveDate,
    ) -> Result<Vec<NewsItem>, MarketDataError> {
        let Some(path) = &self.news else {
            return Ok(Vec::new());
        };
        Ok(read_news_jsonl(path, &self.registry)?
            .into_iter()
            .filter(|n| {
                let day = n.published.date_naive();
                &n.asset == asset && day >= start && day <= end
            })
            .collect())
    }
}

/// Everything gathered from all connectors in one pass.
#[derive(Debug, Default)]
pub struct FetchBatch {
    pub prices: Vec<RawPrice>,
    pub news: Vec<NewsItem>,
    pub failures: Vec<MarketDataError>,
}

/// Runs every connector on its own thread and merges the results in
/// connector order.
pub fn fetch_all(
    connectors: &[Box<dyn Connector>],
    assets: &[AssetId],
    start: NaiveDate,
    end: NaiveDate,
) -> FetchBatch {
    let results: Vec<FetchBatch> = std::thread::scope(|scope| {
        let handles: Vec<_> = connectors
            .iter()
            .map(|conn| {
                scope.spawn(move || {
                    let mut batch = FetchBatch::default();
                    for asset in assets {
                        match conn.fetch_prices(asset, start, end) {
                            Ok(p) => batch.prices.extend(p),
                            Err(e) => batch.failures.push(e),
                        }
                        match conn.fetch_news(asset, start, end) {
                            Ok(n) => batch.news.extend(n),
                            Err(e) => batch.failures.push(e),
                        }
                    }
                    batch
                })
            })
            .collect();
        handles
            .into_iter()
            .zip(connectors)
            .map(|(h, conn)| {
                h.join().unwrap_or_else(|_| FetchBatch {
                    failures: vec![MarketDataError::Connector {
                        source_tag: conn.source().to_string(),
                        reason: "worker panicked".into(),
                    }],
                    ..FetchBatch::default()
                })
            })
            .collect()
    });
    let mut merged = FetchBatch::default();
    for b in results {
        merged.prices.extend(b.prices);
        merged.news.extend(b.news);
        merged.failures.extend(b.failures);
    }
    merged
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::AssetClass;

    struct Failing;

    impl Connector for Failing {
        fn source(&self) -> &str {
            "down"
        }
        fn fetch_prices(&self, _: &AssetId, _: NaiveDate, _: NaiveDate) -> Result<Vec<RawPrice>, MarketDataError> {
            Err(MarketDataError::Connector {
                source_tag: "down".into(),
                reason: "timeout".into(),
            })
        }
        fn fetch_news(&self, _: &AssetId, _: NaiveDate, _: NaiveDate) -> Result<Vec<NewsItem>, MarketDataError> {
            Ok(Vec::new())
        }
    }

    #[test]
    fn fixture_connector_filters_by_asset_and_range() {
        let dir = tempfile::tempdir().unwrap();
        let prices = dir.path().join("p.csv");
        std::fs::write(
            &prices,
            "symbol,date,close,source\nBTC,2025-08-01,1,A\nBTC,2025-08-03,2,A\nETH,2025-08-01,3,A\n",
        )
        .unwrap();
        let btc = AssetId::new("BTC", AssetClass::Crypto).unwrap();
        let registry = AssetRegistry::new([btc.clone()]);
        let conn = FixtureConnector::new("A", Some(prices), None, registry);
        let d = |day| NaiveDate::from_ymd_opt(2025, 8, day).unwrap();
        let batch = fetch_all(&[Box::new(conn), Box::new(Failing)], &[btc], d(1), d(2));
        assert_eq!(batch.prices.len(), 1);
        assert_eq!(batch.prices[0].close, 1.0);
        assert_eq!(batch.failures.len(), 1);
    }
}
