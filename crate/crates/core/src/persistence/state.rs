use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::event::{ArenaEvent, EventBody, Failure, Fill, Gap};
use crate::analytics::{self, LeaderboardEntry, LeaderboardFilter, LeaderboardRow, MetricsSnapshot, MetricsWindow};
use crate::briefing::DailyBrief;
use crate::ledger::Signal;
use crate::marketdata::AssetId;
use crate::protocol::{AgentLabel, DecisionRecord, Phase};

/// One settled period of an (agent, asset) series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPoint {
    pub date: NaiveDate,
    pub signal: Signal,
    pub gross: f64,
    pub net: f64,
    /// Equity after this period, compounding from 1.0 at the start of the
    /// period's phase.
    pub equity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub agent: AgentLabel,
    pub asset: AssetId,
    pub periods_per_year: f64,
    pub risk_free: f64,
    pub warmup: Vec<ReturnPoint>,
    pub live: Vec<ReturnPoint>,
}

impl Series {
    fn push(&mut self, date: NaiveDate, fill: &Fill) {
        let points = match fill.phase {
            Phase::WarmUp => &mut self.warmup,
            Phase::Live => &mut self.live,
        };
        let prev = points.last().map_or(1.0, |p| p.equity);
        points.push(ReturnPoint {
            date,
            signal: fill.signal,
            gross: fill.gross,
            net: fill.net,
            equity: prev * (1.0 + fill.net),
        });
    }

    pub fn equity(&self, phase: Phase) -> f64 {
        let points = match phase {
            Phase::WarmUp => &self.warmup,
            Phase::Live => &self.live,
        };
        points.last().map_or(1.0, |p| p.equity)
    }

    /// Metrics over the live returns only; `None` before the first live fill.
    pub fn live_metrics(&self) -> Option<MetricsSnapshot> {
        let last = self.live.last()?;
        let window = MetricsWindow::new(
            self.live.iter().map(|p| p.net).collect(),
            self.periods_per_year,
            self.risk_free,
        )
        .ok()?;
        Some(analytics::snapshot(&window, last.date))
    }

    pub fn live_gross_cr(&self) -> f64 {
        self.live.iter().fold(1.0, |acc, p| acc * (1.0 + p.gross)) - 1.0
    }
}

/// A per-series equity curve as served to the dashboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquitySeries {
    /// `agent-asset-model`.
    pub label: String,
    pub agent: String,
    pub asset: String,
    pub model: String,
    pub strategy: String,
    pub points: Vec<EquityPointOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityPointOut {
    pub date: NaiveDate,
    pub equity: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StateError {
    #[error("event {seq} belongs to run `{found}`, not `{expected}`")]
    RunMismatch { expected: String, found: String, seq: u64 },
}

/// Everything derivable from a run's event log. Built only by folding
/// events through [`ArenaState::apply`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArenaState {
    pub run_id: Option<String>,
    pub last_seq: u64,
    pub last_date: Option<NaiveDate>,
    pub series: BTreeMap<(String, String), Series>,
    pub decisions: Vec<DecisionRecord>,
    pub briefs: BTreeMap<(String, NaiveDate), DailyBrief>,
    pub latest_close: BTreeMap<String, (NaiveDate, f64)>,
    pub gaps: Vec<(NaiveDate, Gap)>,
    pub failures: Vec<(NaiveDate, Failure)>,
}

impl ArenaState {
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a ArenaEvent>) -> Result<Self, StateError> {
        let mut state = Self::default();
        for e in events {
            state.apply(e)?;
        }
        Ok(state)
    }

    pub fn apply(&mut self, event: &ArenaEvent) -> Result<(), StateError> {
        match &self.run_id {
            Some(run) if *run != event.run_id => {
                return Err(StateError::RunMismatch {
                    expected: run.clone(),
                    found: event.run_id.clone(),
                    seq: event.seq,
                })
            }
            Some(_) => {}
            None => self.run_id = Some(event.run_id.clone()),
        }
        self.last_seq = event.seq;
        self.last_date = Some(event.date);
        match &event.body {
            EventBody::PriceObserved(bar) => {
                self.latest_close
                    .insert(bar.asset.symbol().to_string(), (bar.date, bar.close));
            }
            EventBody::BriefPublished(brief) => {
                self.briefs
                    .insert((brief.asset.symbol().to_string(), brief.date), brief.clone());
            }
            EventBody::DecisionRequested(_) | EventBody::SnapshotEmitted(_) => {}
            EventBody::DecisionMade(record) => self.decisions.push(record.clone()),
            EventBody::FillApplied(fill) => {
                let key = (fill.agent.id.clone(), fill.asset.symbol().to_string());
                self.series
                    .entry(key)
                    .or_insert_with(|| Series {
                        agent: fill.agent.clone(),
                        asset: fill.asset.clone(),
                        periods_per_year: fill.periods_per_year,
                        risk_free: fill.risk_free,
                        warmup: Vec::new(),
                        live: Vec::new(),
                    })
                    .push(event.date, fill);
            }
            EventBody::GapNoted(gap) => self.gaps.push((event.date, gap.clone())),
            EventBody::FailureNoted(f) => self.failures.push((event.date, f.clone())),
        }
        Ok(())
    }

    /// One entry per series with at least one live period, in key order.
    pub fn entries(&self) -> Vec<LeaderboardEntry> {
        self.series
            .values()
            .filter_map(|s| {
                let metrics = s.live_metrics()?;
                Some(LeaderboardEntry {
                    agent: s.agent.name.clone(),
                    model: s.agent.model.clone(),
                    asset: s.asset.symbol().to_string(),
                    strategy: s.agent.strategy.clone(),
                    metrics,
                    cr_gross: s.live_gross_cr(),
                    balance: s.equity(Phase::Live),
                })
            })
            .collect()
    }

    pub fn leaderboard(&self, filter: &LeaderboardFilter) -> Vec<LeaderboardRow> {
        analytics::leaderboard(&self.entries(), filter)
    }

    pub fn equity_series(&self, filter: &LeaderboardFilter) -> Vec<EquitySeries> {
        self.series
            .values()
            .filter(|s| !s.live.is_empty())
            .filter(|s| filter.matches(&s.agent.name, s.asset.symbol(), &s.agent.model, &s.agent.strategy))
            .map(|s| EquitySeries {
                label: format!("{}-{}-{}", s.agent.name, s.asset.symbol(), s.agent.model),
                agent: s.agent.name.clone(),
                asset: s.asset.symbol().to_string(),
                model: s.agent.model.clone(),
                strategy: s.agent.strategy.clone(),
                points: s
                    .live
                    .iter()
                    .map(|p| EquityPointOut {
                        date: p.date,
                        equity: p.equity,
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn metrics_csv(&self) -> String {
        analytics::metrics_csv(&self.entries())
    }

    pub fn leaderboard_csv(&self) -> String {
        analytics::leaderboard_csv(&self.leaderboard(&LeaderboardFilter::default()))
    }

    /// `agent,asset,date,signal,gross_return,net_return,equity` over live
    /// periods.
    pub fn returns_csv(&self) -> String {
        let mut out = String::from("agent,asset,date,signal,gross_return,net_return,equity\n");
        for s in self.series.values() {
            for p in &s.live {
                let agent = if s.agent.id.contains([',', '"']) {
                    format!("\"{}\"", s.agent.id.replace('"', "\"\""))
                } else {
                    s.agent.id.clone()
                };
                out.push_str(&format!(
                    "{agent},{},{},{},{},{},{}\n",
                    s.asset.symbol(),
                    p.date,
                    p.signal.value(),
                    p.gross,
                    p.net,
                    p.equity
                ));
            }
        }
        out
    }
}
