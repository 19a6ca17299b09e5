use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{fmt_fixed, fmt_optional, fmt_percent, MetricsSnapshot};

/// One (agent, asset) series ready to be ranked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub agent: String,
    pub model: String,
    pub asset: String,
    pub strategy: String,
    pub metrics: MetricsSnapshot,
    /// Cumulative return before fees.
    pub cr_gross: f64,
    /// Normalized account balance (equity, starting at 1.0).
    pub balance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    #[serde(flatten)]
    pub entry: LeaderboardEntry,
}

/// Four filter axes. An empty set places no constraint on its axis.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderboardFilter {
    pub agents: BTreeSet<String>,
    pub assets: BTreeSet<String>,
    pub models: BTreeSet<String>,
    pub strategies: BTreeSet<String>,
}

impl LeaderboardFilter {
    pub fn matches(&self, agent: &str, asset: &str, model: &str, strategy: &str) -> bool {
        let ok = |set: &BTreeSet<String>, v: &str| set.is_empty() || set.contains(v);
        ok(&self.agents, agent) && ok(&self.assets, asset) && ok(&self.models, model) && ok(&self.strategies, strategy)
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty() && self.assets.is_empty() && self.models.is_empty() && self.strategies.is_empty()
    }
}

fn rank_order(a: &LeaderboardEntry, b: &LeaderboardEntry) -> Ordering {
    let sr_desc = match (a.metrics.sr, b.metrics.sr) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    b.metrics
        .cr
        .total_cmp(&a.metrics.cr)
        .then(sr_desc)
        .then_with(|| a.agent.cmp(&b.agent))
        .then_with(|| a.model.cmp(&b.model))
        .then_with(|| a.asset.cmp(&b.asset))
        .then_with(|| a.strategy.cmp(&b.strategy))
}

/// Filters, then ranks by CR descending with ties broken by SR descending
/// and agent name ascending. Ranks run 1..=N within the result.
pub fn leaderboard(entries: &[LeaderboardEntry], filter: &LeaderboardFilter) -> Vec<LeaderboardRow> {
    let mut rows: Vec<&LeaderboardEntry> = entries
        .iter()
        .filter(|e| filter.matches(&e.agent, &e.asset, &e.model, &e.strategy))
        .collect();
    rows.sort_by(|a, b| rank_order(a, b));
    rows.into_iter()
        .enumerate()
        .map(|(i, e)| LeaderboardRow {
            rank: i + 1,
            entry: e.clone(),
        })
        .collect()
}

/// `agent,backbone,asset,strategy,as_of,CR,AR,AV,SR,MDD`, percentages to
/// two decimals. Rows are written in the order given.
pub fn metrics_csv(entries: &[LeaderboardEntry]) -> String {
    let mut out = String::from("agent,backbone,asset,strategy,as_of,CR,AR,AV,SR,MDD\n");
    for e in entries {
        let m = &e.metrics;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            csv_field(&e.agent),
            csv_field(&e.model),
            csv_field(&e.asset),
            csv_field(&e.strategy),
            m.as_of,
            fmt_percent(m.cr),
            fmt_percent(m.ar),
            fmt_optional(m.av, fmt_percent),
            fmt_optional(m.sr, fmt_fixed),
            fmt_percent(m.mdd),
        ));
    }
    out
}

pub fn leaderboard_csv(rows: &[LeaderboardRow]) -> String {
    let mut out = String::from("rank,agent,backbone,asset,strategy,as_of,CR,CR_no_fees,AR,AV,SR,MDD,balance\n");
    for r in rows {
        let (e, m) = (&r.entry, &r.entry.metrics);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.rank,
            csv_field(&e.agent),
            csv_field(&e.model),
            csv_field(&e.asset),
            csv_field(&e.strategy),
            m.as_of,
            fmt_percent(m.cr),
            fmt_percent(e.cr_gross),
            fmt_percent(m.ar),
            fmt_optional(m.av, fmt_percent),
            fmt_optional(m.sr, fmt_fixed),
            fmt_percent(m.mdd),
            e.balance,
        ));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn entry(agent: &str, model: &str, asset: &str, strategy: &str, cr: f64, sr: Option<f64>) -> LeaderboardEntry {
        LeaderboardEntry {
            agent: agent.into(),
            model: model.into(),
            asset: asset.into(),
            strategy: strategy.into(),
            metrics: MetricsSnapshot {
                cr,
                ar: cr,
                av: Some(0.1),
                sr,
                mdd: 0.0,
                periods: 3,
                as_of: NaiveDate::from_ymd_opt(2025, 9, 30).unwrap(),
            },
            cr_gross: cr,
            balance: 1.0 + cr,
        }
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn filter_and_rank() {
        let rows = vec![
            entry("A", "m1", "BTC", "Baseline", 0.1, Some(1.0)),
            entry("B", "m1", "TSLA", "Baseline", 0.3, Some(1.0)),
            entry("C", "m2", "BTC", "Baseline", 0.2, Some(1.0)),
        ];
        let only_btc = leaderboard(
            &rows,
            &LeaderboardFilter {
                assets: set(&["BTC"]),
                ..Default::default()
            },
        );
        assert_eq!(only_btc.iter().map(|r| r.entry.agent.as_str()).collect::<Vec<_>>(), ["C", "A"]);
        assert_eq!(only_btc.iter().map(|r| r.rank).collect::<Vec<_>>(), [1, 2]);
        assert_eq!(leaderboard(&rows, &LeaderboardFilter::default()).len(), 3);
    }

    #[test]
    fn ties_break_on_sharpe_then_name() {
        let rows = vec![
            entry("Z", "m", "BTC", "s", 0.1, Some(2.0)),
            entry("B", "m", "BTC", "s", 0.1, Some(1.0)),
            entry("A", "m", "BTC", "s", 0.1, Some(1.0)),
            entry("Y", "m", "BTC", "s", 0.1, None),
        ];
        let got: Vec<_> = leaderboard(&rows, &LeaderboardFilter::default())
            .into_iter()
            .map(|r| r.entry.agent)
            .collect();
        assert_eq!(got, ["Z", "A", "B", "Y"]);
    }

    /// Sort everything by the ranking key, then drop non-matching rows.
    fn sort_then_filter(entries: &[LeaderboardEntry], f: &LeaderboardFilter) -> Vec<String> {
        let mut all: Vec<&LeaderboardEntry> = entries.iter().collect();
        all.sort_by(|a, b| {
            let key = |e: &LeaderboardEntry| {
                (
                    -e.metrics.cr,
                    e.metrics.sr.map(|s| -s).unwrap_or(f64::INFINITY),
                    e.agent.clone(),
                    e.model.clone(),
                    e.asset.clone(),
                    e.strategy.clone(),
                )
            };
            key(a).partial_cmp(&key(b)).unwrap()
        });
        all.into_iter()
            .filter(|e| {
                (f.agents.is_empty() || f.agents.contains(&e.agent))
                    && (f.assets.is_empty() || f.assets.contains(&e.asset))
                    && (f.models.is_empty() || f.models.contains(&e.model))
                    && (f.strategies.is_empty() || f.strategies.contains(&e.strategy))
            })
            .map(|e| format!("{}|{}|{}|{}", e.agent, e.model, e.asset, e.strategy))
            .collect()
    }

    #[test]
    fn matches_sort_then_filter_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let agents = ["InvestorAgent", "TradeAgent", "DeepFundAgent", "HedgeFundAgent"];
        let assets = ["BTC", "ETH", "TSLA", "BMRN"];
        let models = ["GPT-4o", "GPT-4.1", "Vote"];
        let strategies = ["Baseline", "Flip on Reversal"];
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        while entries.len() < 200 {
            let (a, s, m, st) = (
                agents[rng.gen_range(0..4)],
                assets[rng.gen_range(0..4)],
                models[rng.gen_range(0..3)],
                strategies[rng.gen_range(0..2)],
            );
            let cr = (rng.gen_range(-5..5) as f64) / 10.0;
            let sr = if rng.gen_bool(0.1) { None } else { Some(rng.gen_range(-3..3) as f64) };
            let name = format!("{a}{}", rng.gen_range(0..5));
            if seen.insert((name.clone(), s, m, st)) {
                entries.push(entry(&name, m, s, st, cr, sr));
            }
        }
        for _ in 0..50 {
            let pick = |pool: &[&str], rng: &mut ChaCha8Rng| -> BTreeSet<String> {
                pool.iter().filter(|_| rng.gen_bool(0.3)).map(|s| s.to_string()).collect()
            };
            let filter = LeaderboardFilter {
                agents: BTreeSet::new(),
                assets: pick(&assets, &mut rng),
                models: pick(&models, &mut rng),
                strategies: pick(&strategies, &mut rng),
            };
            let got = leaderboard(&entries, &filter);
            let ids: Vec<String> = got
                .iter()
                .map(|r| format!("{}|{}|{}|{}", r.entry.agent, r.entry.model, r.entry.asset, r.entry.strategy))
                .collect();
            assert_eq!(ids, sort_then_filter(&entries, &filter));
            let ranks: Vec<usize> = got.iter().map(|r| r.rank).collect();
            assert_eq!(ranks, (1..=got.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn metrics_csv_format() {
        let mut e = entry("InvestorAgent", "GPT-4o", "TSLA", "Baseline", 0.4688, Some(6.0));
        e.metrics.ar = 9.62131;
        e.metrics.sr = None;
        let csv = metrics_csv(&[e]);
        assert_eq!(
            csv,
            "agent,backbone,asset,strategy,as_of,CR,AR,AV,SR,MDD\n\
             InvestorAgent,GPT-4o,TSLA,Baseline,2025-09-30,46.88,962.13,10.00,—,0.00\n"
        );
    }
}
