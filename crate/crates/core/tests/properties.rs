use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use arena_core::analytics::{leaderboard, LeaderboardEntry, LeaderboardFilter, MetricsSnapshot};
use arena_core::clock::FixedClock;
use arena_core::config::RunConfig;
use arena_core::ledger::{daily_return, Signal};
use arena_core::marketdata::{
    calendar, normalize_prices, AssetClass, AssetId, AssetRegistry, NewsItem, PriceBar, PriceIndex, RawPrice,
    SourcePriority,
};
use arena_core::persistence::{scan, ArenaEvent, ArenaState, EventBody, MemoryLog};
use arena_core::protocol::{
    decide_with_retry, run_session, AgentFramework, AgentSpec, ContextMeta, DailyContext, MarketData, Phase,
    ProtocolConfig, Providers, ScriptBook, SessionEnv, TradeAction,
};
use arena_core::provider::{CompletionProvider, CompletionRequest, ProviderError, RequestTag};
use chrono::{Duration, NaiveDate, TimeZone, Utc};
use proptest::prelude::*;

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2025, 7, 1).unwrap()
}

fn btc() -> AssetId {
    AssetId::new("BTC", AssetClass::Crypto).unwrap()
}

fn action() -> impl Strategy<Value = TradeAction> {
    prop_oneof![Just(TradeAction::Buy), Just(TradeAction::Sell), Just(TradeAction::Hold)]
}

/// Positive closes from a bounded multiplicative walk.
fn closes(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    (1.0f64..1000.0, proptest::collection::vec(-0.2f64..0.2, n)).prop_map(|(p0, steps)| {
        let mut p = p0;
        steps
            .iter()
            .map(|s| {
                let c = p;
                p *= 1.0 + s;
                c
            })
            .collect()
    })
}

fn market(closes: &[f64]) -> MarketData {
    MarketData {
        prices: PriceIndex::new(closes.iter().enumerate().map(|(i, &close)| PriceBar {
            asset: btc(),
            date: day0() + Duration::days(i as i64),
            close,
            source: "fixture".into(),
        })),
        ..MarketData::default()
    }
}

/// BTC over `n` days, warm-up for the first `warmup` of them, one scripted
/// agent named `S`.
fn scripted_config(n: usize, warmup: usize, fee_bps: f64) -> RunConfig {
    let text = format!(
        "run_id = \"prop\"\nwarmup_start = \"{}\"\nlive_start = \"{}\"\nend = \"{}\"\nfee_bps = {fee_bps}\n\n\
         [[assets]]\nsymbol = \"BTC\"\nclass = \"Crypto\"\n\n[[agents]]\nname = \"S\"\nframework = \"Scripted\"\n",
        day0(),
        day0() + Duration::days(warmup as i64),
        day0() + Duration::days(n as i64 - 1),
    );
    RunConfig::from_toml(&text, Path::new("prop.toml")).unwrap()
}

fn run_scripted(cfg: &RunConfig, closes: &[f64], actions: &[TradeAction]) -> (ArenaState, MemoryLog) {
    let mut scripts = ScriptBook::default();
    scripts.insert(
        "S",
        actions
            .iter()
            .enumerate()
            .map(|(i, a)| (day0() + Duration::days(i as i64), *a))
            .collect::<BTreeMap<_, _>>(),
    );
    let env = SessionEnv {
        scripts,
        ..SessionEnv::default()
    };
    let mut log = MemoryLog::new();
    let state = run_session(cfg.plan().unwrap(), market(closes), env, &mut log).unwrap();
    (state, log)
}

fn live_metrics(state: &ArenaState) -> MetricsSnapshot {
    state.entries().remove(0).metrics
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn widening_a_calendar_never_removes_dates(
        equity in any::<bool>(),
        start in 0i64..60, len in 0i64..60, left in 0i64..20, right in 0i64..20,
        holidays in proptest::collection::btree_set(0i64..140, 0..8),
    ) {
        let class = if equity { AssetClass::Equity } else { AssetClass::Crypto };
        let holidays: BTreeSet<NaiveDate> = holidays.into_iter().map(|h| day0() + Duration::days(h)).collect();
        let (s, e) = (day0() + Duration::days(start + 20), day0() + Duration::days(start + 20 + len));
        let narrow = calendar(class, s, e, &holidays).unwrap();
        let wide = calendar(class, s - Duration::days(left), e + Duration::days(right), &holidays).unwrap();
        for d in narrow.dates() {
            prop_assert!(wide.contains(*d));
        }
        prop_assert!(narrow.dates().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn normalized_batches_are_positive_and_unique(
        rows in proptest::collection::vec((0usize..3, 0i64..10, -50.0f64..500.0, 0usize..3), 0..80),
    ) {
        let registry = AssetRegistry::new([btc(), AssetId::new("TSLA", AssetClass::Equity).unwrap()]);
        let symbols = ["btc", "TSLA", "NOPE"];
        let sources = ["exchange", "aggregator", "scraper"];
        let raws: Vec<RawPrice> = rows
            .iter()
            .map(|&(s, d, close, src)| RawPrice {
                symbol: symbols[s].into(),
                date: day0() + Duration::days(d),
                close,
                source: sources[src].into(),
            })
            .collect();
        let batch = normalize_prices(&raws, &registry, &SourcePriority::new(["exchange", "aggregator"]));
        let mut keys = BTreeSet::new();
        for b in &batch.bars {
            prop_assert!(b.close > 0.0 && b.close.is_finite());
            prop_assert!(keys.insert((b.asset.symbol().to_string(), b.date)));
        }
    }

    #[test]
    fn short_is_the_daily_negation_of_long(p in 0.01f64..1e6, q in 0.01f64..1e6) {
        let long = daily_return(Signal::Long, p, q).unwrap();
        prop_assert_eq!(daily_return(Signal::Short, p, q).unwrap(), -long);
        prop_assert_eq!(daily_return(Signal::Flat, p, q).unwrap(), 0.0);
    }

    #[test]
    fn ranks_are_a_permutation_under_any_filter(
        rows in proptest::collection::vec((0usize..3, 0usize..3, -0.5f64..0.5, proptest::option::of(-3.0f64..3.0)), 0..20),
        pick in proptest::collection::btree_set(0usize..3, 0..3),
    ) {
        let names = ["A", "B", "C"];
        let assets = ["BTC", "ETH", "TSLA"];
        let entries: Vec<LeaderboardEntry> = rows
            .iter()
            .map(|&(a, s, cr, sr)| LeaderboardEntry {
                agent: names[a].into(),
                model: "m".into(),
                asset: assets[s].into(),
                strategy: "Baseline".into(),
                metrics: MetricsSnapshot { cr, ar: cr, av: Some(0.1), sr, mdd: 0.0, periods: 5, as_of: day0() },
                cr_gross: cr,
                balance: 1.0 + cr,
            })
            .collect();
        let filter = LeaderboardFilter {
            assets: pick.iter().map(|i| assets[*i].to_string()).collect(),
            ..LeaderboardFilter::default()
        };
        let ranked = leaderboard(&entries, &filter);
        let ranks: Vec<usize> = ranked.iter().map(|r| r.rank).collect();
        prop_assert_eq!(ranks, (1..=ranked.len()).collect::<Vec<_>>());
        prop_assert!(ranked.windows(2).all(|w| w[0].entry.metrics.cr >= w[1].entry.metrics.cr));
        let expected = entries.iter().filter(|e| filter.matches(&e.agent, &e.asset, &e.model, &e.strategy)).count();
        prop_assert_eq!(ranked.len(), expected);
        // clearing the filter restores every row
        prop_assert_eq!(leaderboard(&entries, &LeaderboardFilter::default()).len(), entries.len());
    }

    #[test]
    fn retries_never_exceed_the_limit(
        replies in proptest::collection::vec(prop_oneof![Just("noise"), Just("[Decision]: Sell"), Just("")], 1..8),
        retry_limit in 0u32..5,
    ) {
        struct Seq(Vec<&'static str>, AtomicUsize);
        impl CompletionProvider for Seq {
            fn complete(&self, _: &RequestTag, _: &CompletionRequest) -> Result<String, ProviderError> {
                let i = self.1.fetch_add(1, Ordering::SeqCst);
                match self.0.get(i) {
                    Some(r) if !r.is_empty() => Ok(r.to_string()),
                    _ => Err(ProviderError::Unavailable("down".into())),
                }
            }
        }
        let p = Seq(replies.clone(), AtomicUsize::new(0));
        let agent = AgentSpec { backbone: Some("m".into()), ..AgentSpec::new("L", AgentFramework::GenericLLM) };
        let ctx = DailyContext {
            asset: btc(),
            date: day0(),
            price_history: Vec::new(),
            brief: None,
            recent_actions: Vec::new(),
            metadata: ContextMeta { run_id: "r".into(), phase: Phase::Live },
        };
        let cfg = ProtocolConfig { retry_limit, ..ProtocolConfig::default() };
        let rec = decide_with_retry(&agent, &ctx, &p, &cfg, &FixedClock::default());
        let calls = p.1.load(Ordering::SeqCst);
        prop_assert!(calls as u32 <= retry_limit + 1);
        prop_assert_eq!(rec.attempts as usize, calls);
        prop_assert_eq!(rec.action.is_some(), !rec.failed);
        let first_ok = replies.iter().position(|r| *r == "[Decision]: Sell");
        match first_ok {
            Some(i) if i as u32 <= retry_limit => prop_assert_eq!(rec.action, Some(TradeAction::Sell)),
            _ => prop_assert!(rec.failed),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(24) })]

    #[test]
    fn net_return_is_non_increasing_in_fees(
        path in closes(3..30),
        acts in proptest::collection::vec(action(), 30),
        fees in (0.0f64..50.0, 0.0f64..50.0),
    ) {
        let (lo, hi) = if fees.0 <= fees.1 { fees } else { (fees.1, fees.0) };
        let n = path.len();
        let cr = |bps: f64| live_metrics(&run_scripted(&scripted_config(n, 1, bps), &path, &acts).0).cr;
        prop_assert!(cr(hi) <= cr(lo) + 1e-15);
    }

    #[test]
    fn warm_up_choices_do_not_reach_live_metrics(
        path in closes(6..30),
        live in proptest::collection::vec(action(), 30),
        warm_a in proptest::collection::vec(action(), 3),
        warm_b in proptest::collection::vec(action(), 3),
        fee_bps in 0.0f64..30.0,
    ) {
        let n = path.len();
        let cfg = scripted_config(n, 3, fee_bps);
        let script = |warm: &[TradeAction]| warm.iter().chain(&live[3..]).copied().collect::<Vec<_>>();
        let (a, _) = run_scripted(&cfg, &path, &script(&warm_a));
        let (b, _) = run_scripted(&cfg, &path, &script(&warm_b));
        prop_assert_eq!(live_metrics(&a), live_metrics(&b));
        prop_assert_eq!(&a.series.values().next().unwrap().live, &b.series.values().next().unwrap().live);
    }

    #[test]
    fn replay_is_a_function_of_log_bytes(
        path in closes(2..25),
        acts in proptest::collection::vec(action(), 25),
        fee_bps in 0.0f64..20.0,
    ) {
        let cfg = scripted_config(path.len(), 0, fee_bps);
        let (live, log) = run_scripted(&cfg, &path, &acts);
        let bytes = log.to_bytes();
        let once = ArenaState::replay(&scan(&bytes).unwrap().events).unwrap();
        let twice = ArenaState::replay(&scan(&bytes).unwrap().events).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(&once, &live);
        prop_assert_eq!(once.metrics_csv(), live.metrics_csv());
        // Buy&Hold identity holds at zero fees whenever the script is all BUY
        let all_buy = vec![TradeAction::Buy; path.len()];
        let (bh, _) = run_scripted(&scripted_config(path.len(), 0, 0.0), &path, &all_buy);
        let want = path[path.len() - 1] / path[0] - 1.0;
        prop_assert!((live_metrics(&bh).cr - want).abs() < 1e-12);
    }
}

/// Replies with a fixed summary; decisions always HOLD.
struct Plain;

impl CompletionProvider for Plain {
    fn complete(&self, tag: &RequestTag, _: &CompletionRequest) -> Result<String, ProviderError> {
        if tag.agent == "summarizer" {
            Ok("Quiet day.\nSentiment: Neutral".into())
        } else {
            Ok("[Decision]: Hold".into())
        }
    }
}

#[test]
fn briefs_cite_only_news_published_by_their_date() {
    let text = format!(
        "run_id = \"briefs\"\nwarmup_start = \"{}\"\nlive_start = \"{}\"\nend = \"{}\"\n\n\
         [protocol]\ndecision_time = \"09:30:00\"\n\n\
         [[assets]]\nsymbol = \"BTC\"\nclass = \"Crypto\"\n\n\
         [[agents]]\nname = \"L\"\nframework = \"GenericLLM\"\nbackbone = \"m\"\n\n[summarizer]\nmodel = \"s\"\n",
        day0(),
        day0() + Duration::days(2),
        day0() + Duration::days(9),
    );
    let cfg = RunConfig::from_toml(&text, Path::new("b.toml")).unwrap();
    let mut m = market(&(0..10).map(|i| 100.0 + i as f64).collect::<Vec<_>>());
    let mut published = BTreeMap::new();
    for i in 0..10 {
        for hour in [1, 9, 10, 23] {
            let at = Utc.with_ymd_and_hms(2025, 7, 1 + i, hour, 0, 0).unwrap();
            let item = NewsItem::new(btc(), at, format!("t{i}-{hour}"), "b", "wire", format!("https://x/{i}/{hour}"));
            published.insert(item.id.clone(), at);
            m.news.push(item);
        }
    }
    let provider: Arc<dyn CompletionProvider> = Arc::new(Plain);
    let env = SessionEnv {
        providers: Providers::uniform(provider.clone()),
        summarizer: Some((provider, cfg.summarizer.as_ref().unwrap().settings())),
        ..SessionEnv::default()
    };
    let mut log = MemoryLog::new();
    run_session(cfg.plan().unwrap(), m, env, &mut log).unwrap();
    let briefs: Vec<&ArenaEvent> = log
        .events()
        .iter()
        .filter(|e| matches!(e.body, EventBody::BriefPublished(_)))
        .collect();
    assert!(briefs.len() >= 9);
    for e in briefs {
        let EventBody::BriefPublished(b) = &e.body else { unreachable!() };
        assert!(!b.source_item_ids.is_empty());
        let cutoff = b.date.and_hms_opt(9, 30, 0).unwrap().and_utc();
        for id in &b.source_item_ids {
            assert!(published[id] < cutoff, "{} cites an item published {}", b.date, published[id]);
        }
    }
}
