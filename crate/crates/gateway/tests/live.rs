use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use arena_core::clock::SimClock;
use arena_core::config::RunConfig;
use arena_core::ledger::Signal;
use arena_core::marketdata::{AssetId, Connector, MarketDataError, NewsItem, RawPrice};
use arena_core::persistence::{log_path, read_log, verify, ArenaEvent, EventBody};
use arena_core::protocol::{MarketData, Providers, SessionEnv};
use arena_core::provider::{CompletionProvider, CompletionRequest, ProviderError, RequestTag};
use arena_gateway::live::{LiveRunner, Tick};
use arena_gateway::registry::{Registry, RunStatus};
use arena_gateway::replay_dir;
use chrono::{DateTime, NaiveDate, TimeZone, Utc};

fn day(d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2025, 8, d).unwrap()
}

fn midnight(d: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 8, d, 0, 0, 0).unwrap()
}

fn config(end: &str) -> RunConfig {
    let text = format!(
        r#"
run_id = "live-test"
warmup_start = "2025-08-04"
live_start = "2025-08-05"
end = "{end}"

[[assets]]
symbol = "BTC"
class = "Crypto"

[[agents]]
name = "Buy&Hold"
framework = "BuyAndHold"

[[agents]]
name = "InvestorAgent"
framework = "GenericLLM"
backbone = "GPT-4o"
"#
    );
    RunConfig::from_toml(&text, Path::new("live.toml")).unwrap()
}

/// Serves a fixed close series as if from an exchange API.
struct Feed;

impl Connector for Feed {
    fn source(&self) -> &str {
        "exchange"
    }

    fn fetch_prices(&self, asset: &AssetId, start: NaiveDate, end: NaiveDate) -> Result<Vec<RawPrice>, MarketDataError> {
        let closes = [(4, 100.0), (5, 110.0), (6, 99.0), (7, 108.9)];
        Ok(closes
            .iter()
            .map(|&(d, close)| RawPrice {
                symbol: asset.symbol().into(),
                date: day(d),
                close,
                source: "exchange".into(),
            })
            .filter(|p| p.date >= start && p.date <= end)
            .collect())
    }

    fn fetch_news(&self, _: &AssetId, _: NaiveDate, _: NaiveDate) -> Result<Vec<NewsItem>, MarketDataError> {
        Ok(Vec::new())
    }
}

/// Always answers BUY, except on `down` dates where it is unreachable.
struct Stub {
    down: Option<NaiveDate>,
    calls: AtomicUsize,
}

impl CompletionProvider for Stub {
    fn complete(&self, tag: &RequestTag, _: &CompletionRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if Some(tag.date) == self.down {
            return Err(ProviderError::Unavailable("connection refused".into()));
        }
        Ok("[Decision]: BUY".into())
    }
}

struct Harness {
    runner: LiveRunner,
    clock: Arc<SimClock>,
    registry: Arc<Registry>,
    stub: Arc<Stub>,
    dir: tempfile::TempDir,
}

fn harness(end: &str, down: Option<NaiveDate>) -> Harness {
    let cfg = config(end);
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(SimClock::new(midnight(3)));
    let stub = Arc::new(Stub {
        down,
        calls: AtomicUsize::new(0),
    });
    let env = SessionEnv {
        providers: Providers::uniform(stub.clone()),
        clock: clock.clone(),
        ..SessionEnv::default()
    };
    let registry = Arc::new(Registry::new());
    let runner = LiveRunner::new(
        &cfg,
        MarketData::default(),
        env,
        vec![Box::new(Feed)],
        &log_path(dir.path(), "live-test"),
        registry.clone(),
    )
    .unwrap();
    Harness {
        runner,
        clock,
        registry,
        stub,
        dir,
    }
}

fn events(h: &Harness) -> Vec<ArenaEvent> {
    read_log(&log_path(h.dir.path(), "live-test")).unwrap()
}

fn live_fills(events: &[ArenaEvent], agent: &str) -> Vec<(NaiveDate, Signal, f64)> {
    events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::FillApplied(f) if f.agent.id == agent && f.phase == arena_core::protocol::Phase::Live => {
                Some((e.date, f.signal, f.net))
            }
            _ => None,
        })
        .collect()
}

#[test]
fn runs_two_simulated_days() {
    let mut h = harness("2025-08-06", None);
    assert_eq!(h.runner.poll_once().unwrap(), Tick::Idle);
    assert_eq!(h.registry.status("live-test"), Some(RunStatus::WarmingUp));

    h.clock.set(midnight(4));
    assert_eq!(h.runner.poll_once().unwrap(), Tick::Advanced);
    assert!(events(&h).is_empty(), "decisions are only logged once settled");

    h.clock.set(midnight(5));
    assert_eq!(h.runner.poll_once().unwrap(), Tick::Advanced);
    assert_eq!(h.registry.status("live-test"), Some(RunStatus::Running));
    assert_eq!(h.runner.poll_once().unwrap(), Tick::Idle);

    h.clock.set(midnight(6));
    h.runner.poll_once().unwrap();
    h.clock.set(midnight(7));
    assert_eq!(h.runner.poll_once().unwrap(), Tick::Finished);
    assert_eq!(h.registry.status("live-test"), Some(RunStatus::Stopped));

    let log = events(&h);
    let fills = live_fills(&log, "Buy&Hold");
    assert_eq!(fills.iter().map(|f| f.0).collect::<Vec<_>>(), vec![day(5), day(6)]);
    assert!((fills[0].2 - 0.10).abs() < 1e-12);
    assert!((fills[1].2 + 0.10).abs() < 1e-12);
    assert_eq!(live_fills(&log, "InvestorAgent:GPT-4o").len(), 2);

    // the published state is exactly what the log folds to
    let replayed = replay_dir(&h.dir.path().join("runs/live-test")).unwrap();
    assert_eq!(*h.registry.snapshot().runs["live-test"].state, replayed);
}

#[test]
fn provider_outage_holds_and_keeps_running() {
    let mut h = harness("2025-08-07", Some(day(6)));
    for d in 4..=7 {
        h.clock.set(midnight(d));
        h.runner.poll_once().unwrap();
    }
    assert_eq!(h.registry.status("live-test"), Some(RunStatus::Running));
    let log = events(&h);
    let failure = log
        .iter()
        .find_map(|e| match &e.body {
            EventBody::FailureNoted(f) => Some((e.date, f.attempts)),
            _ => None,
        })
        .expect("failure logged");
    assert_eq!(failure, (day(6), 4));
    let fills = live_fills(&log, "InvestorAgent:GPT-4o");
    assert_eq!(fills.iter().map(|f| f.1).collect::<Vec<_>>(), vec![Signal::Long, Signal::Flat]);
    // 3 dates answered at the first attempt, 4 attempts on the outage
    assert_eq!(h.stub.calls.load(Ordering::SeqCst), 3 + 4);

    h.clock.set(midnight(8));
    assert_eq!(h.runner.poll_once().unwrap(), Tick::Finished);
}

#[test]
fn stop_request_leaves_a_clean_log() {
    let mut h = harness("2025-08-07", None);
    for d in 4..=6 {
        h.clock.set(midnight(d));
        h.runner.poll_once().unwrap();
    }
    h.registry.request_stop("live-test").unwrap();
    h.clock.set(midnight(7));
    assert_eq!(h.runner.poll_once().unwrap(), Tick::Stopped);
    assert_eq!(h.registry.status("live-test"), Some(RunStatus::Stopped));
    let report = verify(&log_path(h.dir.path(), "live-test")).unwrap();
    assert_eq!(report.torn_bytes, 0);
    assert_eq!(events(&h).last().unwrap().date, day(5));
}

#[test]
fn refuses_to_reuse_a_log() {
    let mut h = harness("2025-08-06", None);
    for d in 4..=5 {
        h.clock.set(midnight(d));
        h.runner.poll_once().unwrap();
    }
    let cfg = config("2025-08-06");
    let again = LiveRunner::new(
        &cfg,
        MarketData::default(),
        SessionEnv {
            providers: Providers::uniform(h.stub.clone()),
            ..SessionEnv::default()
        },
        Vec::new(),
        &log_path(h.dir.path(), "live-test"),
        Arc::new(Registry::new()),
    );
    assert!(again.is_err());
}
