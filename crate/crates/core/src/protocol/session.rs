//! The daily session loop.
//!
//! Each calendar date runs in two steps. `decide(d)` builds contexts from
//! closes strictly before `d` plus the brief for `d`, and collects every
//! agent's decision. `settle(d)` runs once the close for `d` is known: each
//! decision earns the return from the previous close to the close of `d`,
//! and the whole date's event group is appended to the log in stage order.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use chrono::NaiveDate;
use thiserror::Error;

use super::{
    decide_scripted, decide_with_retry, majority_vote, AgentFramework, AgentSpec, ContextMeta, DailyContext,
    DecisionRecord, Phase, ProtocolConfig, ProtocolError, ScriptBook, TradeAction,
};
use crate::analytics::PeriodsPerYear;
use crate::briefing::{select_news, summarize_day, DailyBrief, SummarizerSettings};
use crate::clock::{Clock, FixedClock};
use crate::ledger::{apply_fees, daily_return, FeeModel, LedgerError, Signal};
use crate::marketdata::{calendar, AssetId, MarketDataError, NewsItem, PriceBar, PriceIndex, TradingCalendar};
use crate::persistence::{
    ArenaEvent, ArenaState, DecisionRequested, EventBody, EventSink, Failure, Fill, Gap, GapReason, LogError,
    Snapshot, StateError,
};
use crate::provider::CompletionProvider;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("{0}")]
    Sequence(String),
}

/// What to run: assets, roster, dates and accounting settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionPlan {
    pub run_id: String,
    pub assets: Vec<AssetId>,
    pub agents: Vec<AgentSpec>,
    pub warmup_start: NaiveDate,
    pub live_start: NaiveDate,
    pub end: NaiveDate,
    /// Exchange holidays; only equity calendars use them.
    pub holidays: BTreeSet<NaiveDate>,
    pub protocol: ProtocolConfig,
    pub fees: FeeModel,
    pub periods_per_year: PeriodsPerYear,
    pub risk_free: f64,
}

impl SessionPlan {
    pub fn phase(&self, date: NaiveDate) -> Phase {
        if date < self.live_start {
            Phase::WarmUp
        } else {
            Phase::Live
        }
    }

    pub fn calendars(&self) -> Result<BTreeMap<String, TradingCalendar>, SessionError> {
        self.assets
            .iter()
            .map(|a| {
                let cal = calendar(a.asset_class(), self.warmup_start, self.end, &self.holidays)?;
                Ok((a.symbol().to_string(), cal))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: String| Err(SessionError::Config(m));
        if self.run_id.trim().is_empty() {
            return bad("run_id must be non-empty".into());
        }
        if !(self.warmup_start <= self.live_start && self.live_start <= self.end) {
            return bad(format!(
                "dates must satisfy warmup_start <= live_start <= end ({} / {} / {})",
                self.warmup_start, self.live_start, self.end
            ));
        }
        if self.assets.is_empty() || self.agents.is_empty() {
            return bad("at least one asset and one agent are required".into());
        }
        let symbols: BTreeSet<&str> = self.assets.iter().map(|a| a.symbol()).collect();
        if symbols.len() != self.assets.len() {
            return bad("asset symbols must be unique".into());
        }
        self.protocol.validate()?;
        let mut seen = BTreeMap::new();
        for agent in &self.agents {
            agent.validate()?;
            if seen.insert(agent.id(), ()).is_some() {
                return bad(format!("agent id `{}` appears twice", agent.id()));
            }
        }
        let mut specs: BTreeMap<String, &AgentSpec> = BTreeMap::new();
        for agent in flatten_roster(&self.agents) {
            if let Some(other) = specs.insert(agent.id(), agent) {
                if other != agent {
                    return bad(format!("two different agents share the id `{}`", agent.id()));
                }
            }
        }
        Ok(())
    }
}

/// Depth-first roster: ensemble members come before their ensemble and an
/// agent appearing more than once is kept at its first position.
pub fn flatten_roster(agents: &[AgentSpec]) -> Vec<&AgentSpec> {
    fn visit<'a>(a: &'a AgentSpec, out: &mut Vec<&'a AgentSpec>, seen: &mut BTreeSet<String>) {
        for m in &a.members {
            visit(m, out, seen);
        }
        if seen.insert(a.id()) {
            out.push(a);
        }
    }
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for a in agents {
        visit(a, &mut out, &mut seen);
    }
    out
}

/// Prices, stored briefs and raw news available to the session.
#[derive(Debug, Clone, Default)]
pub struct MarketData {
    pub prices: PriceIndex,
    pub briefs: BTreeMap<(String, NaiveDate), DailyBrief>,
    pub news: Vec<NewsItem>,
}

impl MarketData {
    /// Removes every price, brief and article dated after `date`.
    pub fn withhold_after(&mut self, date: NaiveDate) {
        self.prices.truncate_after(date);
        self.briefs.retain(|(_, d), _| *d <= date);
        self.news.retain(|n| n.published.date_naive() <= date);
    }
}

/// Completion providers keyed by backbone model id.
#[derive(Clone, Default)]
pub struct Providers {
    pub by_model: BTreeMap<String, Arc<dyn CompletionProvider>>,
    pub default: Option<Arc<dyn CompletionProvider>>,
}

impl Providers {
    /// One provider for every model.
    pub fn uniform(provider: Arc<dyn CompletionProvider>) -> Self {
        Self {
            by_model: BTreeMap::new(),
            default: Some(provider),
        }
    }

    pub fn get(&self, model: &str) -> Option<&dyn CompletionProvider> {
        self.by_model.get(model).or(self.default.as_ref()).map(|p| p.as_ref())
    }
}

pub struct SessionEnv {
    pub providers: Providers,
    pub summarizer: Option<(Arc<dyn CompletionProvider>, SummarizerSettings)>,
    pub scripts: ScriptBook,
    pub clock: Arc<dyn Clock>,
}

impl Default for SessionEnv {
    fn default() -> Self {
        Self {
            providers: Providers::default(),
            summarizer: None,
            scripts: ScriptBook::default(),
            clock: Arc::new(FixedClock::default()),
        }
    }
}

struct PendingAsset {
    asset: AssetId,
    phase: Phase,
    brief: Option<DailyBrief>,
    brief_gap: Option<String>,
    digest: String,
    /// One per roster entry, in roster order.
    records: Vec<DecisionRecord>,
}

struct Pending {
    date: NaiveDate,
    assets: Vec<PendingAsset>,
}

type SeriesKey = (String, String);

pub struct Session {
    plan: SessionPlan,
    market: MarketData,
    env: SessionEnv,
    calendars: BTreeMap<String, TradingCalendar>,
    dates: Vec<NaiveDate>,
    roster: Vec<AgentSpec>,
    top_level: BTreeSet<String>,
    memory: HashMap<SeriesKey, VecDeque<DecisionRecord>>,
    settled: HashMap<SeriesKey, (Signal, Phase)>,
    last_close: HashMap<String, (NaiveDate, f64)>,
    last_decided: Option<NaiveDate>,
    pending: Option<Pending>,
    state: ArenaState,
}

impl Session {
    pub fn new(plan: SessionPlan, market: MarketData, env: SessionEnv) -> Result<Self, SessionError> {
        plan.validate()?;
        let calendars = plan.calendars()?;
        let dates: BTreeSet<NaiveDate> = calendars.values().flat_map(|c| c.dates().iter().copied()).collect();
        let roster: Vec<AgentSpec> = flatten_roster(&plan.agents).into_iter().cloned().collect();
        for agent in &roster {
            match agent.framework {
                AgentFramework::GenericLLM => {
                    let model = agent.backbone.as_deref().unwrap_or_default();
                    if env.providers.get(model).is_none() {
                        return Err(SessionError::Config(format!(
                            "no completion provider for model `{model}` (agent `{}`)",
                            agent.id()
                        )));
                    }
                }
                AgentFramework::Scripted if env.scripts.action_count(&agent.id()).is_none() => {
                    return Err(SessionError::Config(format!("no script loaded for agent `{}`", agent.id())));
                }
                _ => {}
            }
        }
        let top_level = plan.agents.iter().map(|a| a.id()).collect();
        Ok(Self {
            plan,
            market,
            env,
            calendars,
            dates: dates.into_iter().collect(),
            roster,
            top_level,
            memory: HashMap::new(),
            settled: HashMap::new(),
            last_close: HashMap::new(),
            last_decided: None,
            pending: None,
            state: ArenaState::default(),
        })
    }

    /// Union of all asset calendars, ascending.
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn plan(&self) -> &SessionPlan {
        &self.plan
    }

    pub fn market_mut(&mut self) -> &mut MarketData {
        &mut self.market
    }

    pub fn state(&self) -> &ArenaState {
        &self.state
    }

    pub fn into_state(self) -> ArenaState {
        self.state
    }

    /// Date decided but not yet settled.
    pub fn pending_date(&self) -> Option<NaiveDate> {
        self.pending.as_ref().map(|p| p.date)
    }

    /// The context every agent sees for `asset` on `date`, minus its own
    /// recent actions.
    fn shared_context(&self, asset: &AssetId, date: NaiveDate, brief: Option<DailyBrief>) -> DailyContext {
        let k = self.plan.protocol.memory_size;
        let cal = &self.calendars[asset.symbol()];
        let before = &cal.dates()[..cal.dates().partition_point(|d| *d < date)];
        let mut history: Vec<PriceBar> = before
            .iter()
            .rev()
            .filter_map(|d| self.market.prices.get(asset.symbol(), *d).cloned())
            .take(k)
            .collect();
        history.reverse();
        DailyContext {
            asset: asset.clone(),
            date,
            price_history: history,
            brief,
            recent_actions: Vec::new(),
            metadata: ContextMeta {
                run_id: self.plan.run_id.clone(),
                phase: self.plan.phase(date),
            },
        }
    }

    fn brief_for(&self, asset: &AssetId, date: NaiveDate) -> (Option<DailyBrief>, Option<String>) {
        if let Some(b) = self.market.briefs.get(&(asset.symbol().to_string(), date)) {
            return (Some(b.clone()), None);
        }
        let Some((summarizer, settings)) = &self.env.summarizer else {
            return (None, None);
        };
        let previous = self.calendars[asset.symbol()].previous(date);
        let articles = select_news(&self.market.news, asset, previous, date, self.plan.protocol.decision_time);
        let outcome = summarize_day(asset, date, &articles, summarizer.as_ref(), settings);
        match outcome.brief {
            Some(b) => (Some(b), None),
            None => (
                None,
                Some(format!(
                    "summarizer failed after {} attempts: {}",
                    outcome.attempts,
                    outcome.error.unwrap_or_default()
                )),
            ),
        }
    }

    fn decide_asset(&self, asset: &AssetId, date: NaiveDate) -> PendingAsset {
        let (brief, brief_gap) = self.brief_for(asset, date);
        let shared = self.shared_context(asset, date, brief.clone());
        let digest = shared.market_digest();
        let contexts: Vec<DailyContext> = self
            .roster
            .iter()
            .map(|agent| {
                let mut ctx = shared.clone();
                if let Some(mem) = self.memory.get(&(agent.id(), asset.symbol().to_string())) {
                    ctx.recent_actions = mem.iter().cloned().collect();
                }
                ctx
            })
            .collect();

        let mut records: Vec<Option<DecisionRecord>> = vec![None; self.roster.len()];
        std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .roster
                .iter()
                .zip(&contexts)
                .enumerate()
                .filter(|(_, (a, _))| a.framework == AgentFramework::GenericLLM)
                .map(|(i, (agent, ctx))| {
                    let provider = self
                        .env
                        .providers
                        .get(agent.backbone.as_deref().unwrap_or_default())
                        .expect("checked in Session::new");
                    let cfg = &self.plan.protocol;
                    let clock = self.env.clock.as_ref();
                    (i, scope.spawn(move || decide_with_retry(agent, ctx, provider, cfg, clock)))
                })
                .collect();
            for (i, h) in handles {
                records[i] = Some(h.join().expect("decision thread panicked"));
            }
        });

        let mut by_id: HashMap<String, TradeAction> = HashMap::new();
        for (i, (agent, ctx)) in self.roster.iter().zip(&contexts).enumerate() {
            let record = match agent.framework {
                AgentFramework::GenericLLM => records[i].take().expect("decided above"),
                AgentFramework::Scripted => decide_scripted(agent, ctx, &self.env.scripts),
                AgentFramework::BuyAndHold => fixed_record(agent, ctx, TradeAction::Buy),
                AgentFramework::AlwaysHold => fixed_record(agent, ctx, TradeAction::Hold),
                AgentFramework::VoteEnsemble => {
                    let member_actions: Vec<(String, TradeAction)> = agent
                        .members
                        .iter()
                        .map(|m| (m.id(), by_id[&m.id()]))
                        .collect();
                    let votes: Vec<TradeAction> = member_actions.iter().map(|(_, a)| *a).collect();
                    let mut r = fixed_record(agent, ctx, majority_vote(&votes).expect("ensembles have members"));
                    r.member_actions = member_actions;
                    r
                }
            };
            by_id.insert(agent.id(), record.accounted_action());
            records[i] = Some(record);
        }

        PendingAsset {
            asset: asset.clone(),
            phase: self.plan.phase(date),
            brief,
            brief_gap,
            digest,
            records: records.into_iter().map(|r| r.expect("every agent decided")).collect(),
        }
    }

    /// Collects every agent's decision for `date`. Nothing is logged until
    /// [`Session::settle`].
    pub fn decide(&mut self, date: NaiveDate) -> Result<(), SessionError> {
        if let Some(p) = &self.pending {
            return Err(SessionError::Sequence(format!("{} is decided but not settled", p.date)));
        }
        if self.last_decided.is_some_and(|d| date <= d) {
            return Err(SessionError::Sequence(format!("{date} is not after the last decided date")));
        }
        let active: Vec<AssetId> = self
            .plan
            .assets
            .iter()
            .filter(|a| self.calendars[a.symbol()].contains(date))
            .cloned()
            .collect();
        let assets = active.iter().map(|a| self.decide_asset(a, date)).collect();
        self.pending = Some(Pending { date, assets });
        self.last_decided = Some(date);
        Ok(())
    }

    /// Settles the pending date against its closes and appends the date's
    /// events to `sink`.
    pub fn settle(&mut self, date: NaiveDate, sink: &mut dyn EventSink) -> Result<(), SessionError> {
        let pending = match self.pending.take() {
            Some(p) if p.date == date => p,
            other => {
                let found = other.as_ref().map(|p| p.date.to_string());
                self.pending = other;
                return Err(SessionError::Sequence(format!(
                    "cannot settle {date}: pending date is {}",
                    found.unwrap_or_else(|| "none".into())
                )));
            }
        };
        let closes: Vec<Option<PriceBar>> = pending
            .assets
            .iter()
            .map(|pa| self.market.prices.get(pa.asset.symbol(), date).cloned())
            .collect();
        let priced = || pending.assets.iter().zip(&closes).filter_map(|(pa, c)| c.as_ref().map(|c| (pa, c)));

        let mut bodies = Vec::new();
        for (pa, close) in pending.assets.iter().zip(&closes) {
            match close {
                Some(bar) => bodies.push(EventBody::PriceObserved(bar.clone())),
                None => bodies.push(EventBody::GapNoted(Gap {
                    asset: pa.asset.clone(),
                    reason: GapReason::MissingPrice,
                    detail: format!("no close for {} on {date}; decisions discarded", pa.asset.symbol()),
                })),
            }
            if let Some(detail) = &pa.brief_gap {
                bodies.push(EventBody::GapNoted(Gap {
                    asset: pa.asset.clone(),
                    reason: GapReason::BriefUnavailable,
                    detail: detail.clone(),
                }));
            }
        }
        for (pa, _) in priced() {
            if let Some(b) = &pa.brief {
                bodies.push(EventBody::BriefPublished(b.clone()));
            }
        }
        for (pa, _) in priced() {
            for r in &pa.records {
                bodies.push(EventBody::DecisionRequested(DecisionRequested {
                    agent: r.agent.label(),
                    asset: pa.asset.clone(),
                    phase: pa.phase,
                    context_digest: pa.digest.clone(),
                }));
            }
        }
        for (pa, _) in priced() {
            for r in &pa.records {
                bodies.push(EventBody::DecisionMade(r.clone()));
                if r.failed {
                    bodies.push(EventBody::FailureNoted(Failure {
                        agent: r.agent.label(),
                        asset: pa.asset.clone(),
                        phase: pa.phase,
                        attempts: r.attempts,
                        detail: "no valid decision; accounted as HOLD".into(),
                    }));
                }
            }
        }
        let mut filled = Vec::new();
        for (pa, bar) in priced() {
            let symbol = pa.asset.symbol().to_string();
            let Some(&(_, prev_close)) = self.last_close.get(&symbol) else {
                continue;
            };
            for r in pa.records.iter().filter(|r| self.top_level.contains(&r.agent.id())) {
                let key = (r.agent.id(), symbol.clone());
                let signal = r.accounted_action().signal();
                let previous = match self.settled.get(&key) {
                    Some((s, phase)) if *phase == pa.phase => *s,
                    _ => Signal::Flat,
                };
                let changed = signal != previous;
                let gross = daily_return(signal, prev_close, bar.close)?;
                let net = apply_fees(gross, changed, self.plan.fees);
                self.settled.insert(key, (signal, pa.phase));
                bodies.push(EventBody::FillApplied(Fill {
                    agent: r.agent.label(),
                    asset: pa.asset.clone(),
                    phase: pa.phase,
                    signal,
                    prev_close,
                    close: bar.close,
                    position_changed: changed,
                    fee_bps: self.plan.fees.fee_bps,
                    gross,
                    net,
                    periods_per_year: self.plan.periods_per_year.for_class(pa.asset.asset_class()),
                    risk_free: self.plan.risk_free,
                }));
                filled.push((r.agent.id(), symbol.clone(), pa.phase));
            }
        }
        for body in bodies {
            self.emit(date, body, sink)?;
        }
        for (agent_id, symbol, phase) in filled {
            let series = &self.state.series[&(agent_id, symbol)];
            let body = EventBody::SnapshotEmitted(Snapshot {
                agent: series.agent.clone(),
                asset: series.asset.clone(),
                phase,
                equity: series.equity(phase),
                metrics: match phase {
                    Phase::Live => series.live_metrics(),
                    Phase::WarmUp => None,
                },
            });
            self.emit(date, body, sink)?;
        }

        let k = self.plan.protocol.memory_size;
        for (pa, bar) in pending.assets.iter().zip(&closes).filter_map(|(pa, c)| c.as_ref().map(|c| (pa, c))) {
            let symbol = pa.asset.symbol().to_string();
            self.last_close.insert(symbol.clone(), (date, bar.close));
            for r in &pa.records {
                let mem = self.memory.entry((r.agent.id(), symbol.clone())).or_default();
                mem.push_back(r.clone());
                while mem.len() > k {
                    mem.pop_front();
                }
            }
        }
        Ok(())
    }

    fn emit(&mut self, date: NaiveDate, body: EventBody, sink: &mut dyn EventSink) -> Result<(), SessionError> {
        let event = ArenaEvent {
            seq: sink.last_seq() + 1,
            run_id: self.plan.run_id.clone(),
            date,
            body,
        };
        sink.append(&event)?;
        self.state.apply(&event)?;
        Ok(())
    }
}

fn fixed_record(agent: &AgentSpec, ctx: &DailyContext, action: TradeAction) -> DecisionRecord {
    DecisionRecord {
        agent: agent.clone(),
        asset: ctx.asset.clone(),
        date: ctx.date,
        phase: ctx.metadata.phase,
        action: Some(action),
        attempts: 1,
        raw_reply: None,
        latency_ms: 0,
        failed: false,
        member_actions: Vec::new(),
    }
}

/// Runs every calendar date from warm-up start to end and returns the state
/// folded from the emitted events.
pub fn run_session(
    plan: SessionPlan,
    market: MarketData,
    env: SessionEnv,
    sink: &mut dyn EventSink,
) -> Result<ArenaState, SessionError> {
    let mut session = Session::new(plan, market, env)?;
    for date in session.dates().to_vec() {
        session.decide(date)?;
        session.settle(date, sink)?;
    }
    Ok(session.into_state())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::AssetClass;
    use crate::persistence::{EventKind, MemoryLog};

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2025, 8, day).unwrap()
    }

    fn btc() -> AssetId {
        AssetId::new("BTC", AssetClass::Crypto).unwrap()
    }

    fn plan(agents: Vec<AgentSpec>, start: u32, live: u32, end: u32) -> SessionPlan {
        SessionPlan {
            run_id: "t".into(),
            assets: vec![btc()],
            agents,
            warmup_start: d(start),
            live_start: d(live),
            end: d(end),
            holidays: BTreeSet::new(),
            protocol: ProtocolConfig::default(),
            fees: FeeModel::default(),
            periods_per_year: PeriodsPerYear::default(),
            risk_free: 0.0,
        }
    }

    fn market(closes: &[(u32, f64)]) -> MarketData {
        MarketData {
            prices: PriceIndex::new(closes.iter().map(|(day, c)| PriceBar {
                asset: btc(),
                date: d(*day),
                close: *c,
                source: "fixture".into(),
            })),
            ..Default::default()
        }
    }

    #[test]
    fn buy_and_hold_three_days() {
        let bh = AgentSpec::new("BH", AgentFramework::BuyAndHold);
        let mut log = MemoryLog::new();
        let state = run_session(
            plan(vec![bh], 1, 1, 3),
            market(&[(1, 100.0), (2, 110.0), (3, 99.0)]),
            SessionEnv::default(),
            &mut log,
        )
        .unwrap();
        let actions: Vec<_> = state.decisions.iter().map(|r| r.accounted_action()).collect();
        assert_eq!(actions, [TradeAction::Buy; 3]);
        let series = &state.series[&("BH".to_string(), "BTC".to_string())];
        let rets: Vec<f64> = series.live.iter().map(|p| p.net).collect();
        assert_eq!(rets.len(), 2);
        assert!((rets[0] - 0.10).abs() < 1e-12 && (rets[1] + 0.10).abs() < 1e-12);
        assert_eq!(ArenaState::replay(log.events()).unwrap(), state);
    }

    #[test]
    fn warmup_is_excluded_and_live_starts_flat() {
        let bh = AgentSpec::new("BH", AgentFramework::BuyAndHold);
        let plan = SessionPlan {
            fees: FeeModel::new(10.0).unwrap(),
            ..plan(vec![bh], 1, 3, 4)
        };
        let state = run_session(
            plan,
            market(&[(1, 100.0), (2, 50.0), (3, 60.0), (4, 66.0)]),
            SessionEnv::default(),
            &mut MemoryLog::new(),
        )
        .unwrap();
        let s = state.series.values().next().unwrap();
        assert_eq!(s.warmup.len(), 1);
        assert_eq!(s.live.len(), 2);
        assert!(s.live[0].net < s.live[0].gross, "first live fill pays the entry fee");
        assert_eq!(s.live[1].net, s.live[1].gross);
        assert_eq!(s.live_metrics().unwrap().as_of, d(4));
    }

    #[test]
    fn missing_close_is_a_gap() {
        let bh = AgentSpec::new("BH", AgentFramework::BuyAndHold);
        let mut log = MemoryLog::new();
        let state = run_session(
            plan(vec![bh], 1, 1, 3),
            market(&[(1, 100.0), (3, 120.0)]),
            SessionEnv::default(),
            &mut log,
        )
        .unwrap();
        assert_eq!(state.gaps.len(), 1);
        assert_eq!(state.gaps[0].0, d(2));
        assert_eq!(state.decisions.len(), 2);
        let s = state.series.values().next().unwrap();
        assert_eq!(s.live.len(), 1);
        assert!((s.live[0].net - 0.2).abs() < 1e-12);
        let day2: Vec<EventKind> = log.events().iter().filter(|e| e.date == d(2)).map(|e| e.kind()).collect();
        assert_eq!(day2, [EventKind::GapNoted]);
    }

    #[test]
    fn ensembles_vote_over_members() {
        let members = vec![
            AgentSpec::new("B1", AgentFramework::BuyAndHold),
            AgentSpec::new("B2", AgentFramework::BuyAndHold),
            AgentSpec::new("H", AgentFramework::AlwaysHold),
        ];
        let vote = AgentSpec::vote("V", members);
        let mut log = MemoryLog::new();
        let state = run_session(
            plan(vec![vote], 1, 1, 2),
            market(&[(1, 100.0), (2, 101.0)]),
            SessionEnv::default(),
            &mut log,
        )
        .unwrap();
        let ids: Vec<String> = state.decisions.iter().filter(|r| r.date == d(1)).map(|r| r.agent.id()).collect();
        assert_eq!(ids, ["B1", "B2", "H", "V:Vote"]);
        let v = state.decisions.iter().find(|r| r.agent.id() == "V:Vote").unwrap();
        assert_eq!(v.action, Some(TradeAction::Buy));
        assert_eq!(v.member_actions.len(), 3);
        assert_eq!(state.series.len(), 1, "only top-level agents are filled");
    }

    #[test]
    fn agents_share_market_context() {
        let agents = vec![
            AgentSpec::new("A", AgentFramework::BuyAndHold),
            AgentSpec::new("B", AgentFramework::AlwaysHold),
        ];
        let mut log = MemoryLog::new();
        run_session(plan(agents, 1, 1, 3), market(&[(1, 1.0), (2, 2.0), (3, 3.0)]), SessionEnv::default(), &mut log)
            .unwrap();
        for day in 1..=3 {
            let digests: BTreeSet<String> = log
                .events()
                .iter()
                .filter(|e| e.date == d(day))
                .filter_map(|e| match &e.body {
                    EventBody::DecisionRequested(r) => Some(r.context_digest.clone()),
                    _ => None,
                })
                .collect();
            assert_eq!(digests.len(), 1);
        }
    }

    #[test]
    fn out_of_order_calls_are_rejected() {
        let mut s = Session::new(
            plan(vec![AgentSpec::new("A", AgentFramework::BuyAndHold)], 1, 1, 3),
            market(&[(1, 1.0)]),
            SessionEnv::default(),
        )
        .unwrap();
        let mut log = MemoryLog::new();
        assert!(s.settle(d(1), &mut log).is_err());
        s.decide(d(1)).unwrap();
        assert!(s.decide(d(2)).is_err());
        s.settle(d(1), &mut log).unwrap();
        assert!(s.decide(d(1)).is_err());
    }

    #[test]
    fn missing_provider_is_a_config_error() {
        let r = Session::new(
            plan(vec![AgentSpec::llm("L", "m")], 1, 1, 2),
            MarketData::default(),
            SessionEnv::default(),
        );
        assert!(matches!(r, Err(SessionError::Config(_))));
    }
}
