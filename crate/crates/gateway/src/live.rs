//! The live loop. `poll_once` compares the injected clock with the next
//! decision cutoff: at the cutoff of date `d` the runner decides `d`, and one
//! day later (when the close of `d` is in) it settles `d` and publishes the
//! new state.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use arena_core::briefing::decision_cutoff;
use arena_core::config::RunConfig;
use arena_core::marketdata::{
    fetch_all, normalize_prices, AssetId, AssetRegistry, Connector, FixtureConnector, PriceIndex, SourcePriority,
};
use arena_core::persistence::{EventSink, FileLog};
use arena_core::protocol::{MarketData, Phase, Session, SessionEnv};
use chrono::{DateTime, NaiveDate, NaiveTime, Utc};

use crate::registry::{Registry, RunHandle, RunMode, RunStatus};
use crate::remote::HttpFeedConnector;
use crate::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tick {
    /// Nothing was due.
    Idle,
    /// At least one decide or settle step ran.
    Advanced,
    /// Every date has been settled.
    Finished,
    Stopped,
}

pub struct LiveRunner {
    run_id: String,
    session: Session,
    sink: FileLog,
    env_clock: Arc<dyn arena_core::clock::Clock>,
    connectors: Vec<Box<dyn Connector>>,
    assets: Vec<AssetId>,
    registry_assets: AssetRegistry,
    priority: SourcePriority,
    warmup_start: NaiveDate,
    decision_time: NaiveTime,
    dates: Vec<NaiveDate>,
    next: usize,
    registry: Arc<Registry>,
    stop: Arc<AtomicBool>,
}

/// Connectors named by the config: fixture files and HTTP feeds.
pub fn connectors_from_config(cfg: &RunConfig, base: &Path) -> Result<Vec<Box<dyn Connector>>, GatewayError> {
    let registry = cfg.registry()?;
    let mut out: Vec<Box<dyn Connector>> = Vec::new();
    for p in &cfg.data.prices {
        out.push(Box::new(FixtureConnector::new(
            p.display().to_string(),
            Some(base.join(p)),
            None,
            registry.clone(),
        )));
    }
    for p in &cfg.data.news {
        out.push(Box::new(FixtureConnector::new(
            p.display().to_string(),
            None,
            Some(base.join(p)),
            registry.clone(),
        )));
    }
    for feed in &cfg.data.feeds {
        out.push(Box::new(HttpFeedConnector::from_config(feed, registry.clone())?));
    }
    Ok(out)
}

impl LiveRunner {
    /// Opens a fresh log at `log_path` and registers the run. Stored briefs
    /// from `market` are kept; prices and news come from the connectors.
    pub fn new(
        cfg: &RunConfig,
        market: MarketData,
        env: SessionEnv,
        connectors: Vec<Box<dyn Connector>>,
        log_path: &Path,
        registry: Arc<Registry>,
    ) -> Result<Self, GatewayError> {
        let sink = FileLog::open(log_path)?;
        if sink.last_seq() > 0 {
            return Err(GatewayError::Registry(format!(
                "{} already holds events; use a new run_id",
                log_path.display()
            )));
        }
        let clock = env.clock.clone();
        let session = Session::new(
            cfg.plan()?,
            MarketData {
                briefs: market.briefs,
                ..MarketData::default()
            },
            env,
        )?;
        let stop = registry.register(
            RunHandle {
                run_id: cfg.run_id.clone(),
                mode: RunMode::Live,
                status: RunStatus::WarmingUp,
                started: clock.now(),
            },
            session.state().clone(),
        )?;
        Ok(Self {
            run_id: cfg.run_id.clone(),
            dates: session.dates().to_vec(),
            session,
            sink,
            env_clock: clock,
            connectors,
            assets: cfg.asset_ids()?,
            registry_assets: cfg.registry()?,
            priority: SourcePriority::new(cfg.data.source_priority.clone()),
            warmup_start: cfg.warmup_start(),
            decision_time: cfg.protocol.decision_time,
            next: 0,
            registry,
            stop,
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    fn cutoff(&self, date: NaiveDate) -> DateTime<Utc> {
        decision_cutoff(date, self.decision_time)
    }

    /// Refreshes prices and news known at `now`. A close for `d` counts as
    /// known from the cutoff of the following day.
    fn ingest(&mut self, now: DateTime<Utc>) {
        let batch = fetch_all(&self.connectors, &self.assets, self.warmup_start, now.date_naive());
        for f in &batch.failures {
            tracing::warn!(run = %self.run_id, error = %f, "connector failure");
        }
        let known: Vec<_> = batch
            .prices
            .into_iter()
            .filter(|p| self.cutoff(p.date + chrono::Duration::days(1)) <= now)
            .collect();
        let normalized = normalize_prices(&known, &self.registry_assets, &self.priority);
        for r in &normalized.rejected {
            tracing::warn!(run = %self.run_id, error = %r, "rejected price");
        }
        let market = self.session.market_mut();
        market.prices = PriceIndex::new(normalized.bars);
        market.news = batch.news.into_iter().filter(|n| n.published <= now).collect();
    }

    fn advance(&mut self, now: DateTime<Utc>) -> Result<bool, GatewayError> {
        let mut progressed = false;
        loop {
            if let Some(p) = self.session.pending_date() {
                if self.cutoff(p + chrono::Duration::days(1)) <= now {
                    self.ingest(now);
                    self.session.settle(p, &mut self.sink)?;
                    self.registry.publish_state(&self.run_id, self.session.state().clone())?;
                    progressed = true;
                    continue;
                }
                break;
            }
            let Some(&d) = self.dates.get(self.next) else {
                break;
            };
            if self.cutoff(d) > now {
                break;
            }
            self.ingest(now);
            self.session.decide(d)?;
            self.next += 1;
            if self.session.plan().phase(d) == Phase::Live {
                self.registry.set_status(&self.run_id, RunStatus::Running)?;
            }
            progressed = true;
        }
        Ok(progressed)
    }

    /// Runs every step that is due at the clock's current time.
    pub fn poll_once(&mut self) -> Result<Tick, GatewayError> {
        if self.stop.load(Ordering::SeqCst) {
            self.registry.set_status(&self.run_id, RunStatus::Stopped)?;
            return Ok(Tick::Stopped);
        }
        let now = self.env_clock.now();
        let progressed = match self.advance(now) {
            Ok(p) => p,
            Err(e) => {
                tracing::error!(run = %self.run_id, error = %e, "live run failed");
                let _ = self.registry.set_status(&self.run_id, RunStatus::Failed);
                return Err(e);
            }
        };
        if self.next >= self.dates.len() && self.session.pending_date().is_none() {
            self.registry.set_status(&self.run_id, RunStatus::Stopped)?;
            return Ok(Tick::Finished);
        }
        Ok(if progressed { Tick::Advanced } else { Tick::Idle })
    }

    /// Polls until the run finishes or a stop is requested.
    pub fn run(mut self, interval: Duration) -> Result<Tick, GatewayError> {
        loop {
            match self.poll_once()? {
                t @ (Tick::Finished | Tick::Stopped) => return Ok(t),
                _ => {
                    let step = Duration::from_millis(200).min(interval);
                    let mut waited = Duration::ZERO;
                    while waited < interval && !self.stop.load(Ordering::SeqCst) {
                        std::thread::sleep(step);
                        waited += step;
                    }
                }
            }
        }
    }
}
