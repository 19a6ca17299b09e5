use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;

use super::{build_decision_prompt, AgentSpec, DailyContext, DecisionRecord, ProtocolConfig, ProtocolError, TradeAction};
use crate::clock::Clock;
use crate::provider::{CompletionProvider, CompletionRequest, RequestTag};

const TAG: &str = "[decision]";

/// Finds the last `[Decision]: <word>` line (case-insensitive, markdown
/// emphasis and trailing punctuation ignored) and maps the word to an
/// action. A line that still lists alternatives (`Buy / Sell`) is rejected.
pub fn parse_decision(reply: &str) -> Result<TradeAction, ProtocolError> {
    for line in reply.lines().rev() {
        let lower = line.to_ascii_lowercase();
        let Some(pos) = lower.find(TAG) else {
            continue;
        };
        let rest = lower[pos + TAG.len()..].trim_start_matches(|c: char| c == '*' || c == '_' || c.is_whitespace());
        let Some(rest) = rest.strip_prefix(':') else {
            continue;
        };
        let rest = rest.trim_start_matches(|c: char| !c.is_ascii_alphanumeric() && c != '/' && c != '|');
        let word_end = rest
            .find(|c: char| !c.is_ascii_alphabetic())
            .unwrap_or(rest.len());
        let (word, tail) = rest.split_at(word_end);
        if word.is_empty() {
            return Err(ProtocolError::UnknownAction(rest.trim().to_string()));
        }
        let action: TradeAction = word.parse()?;
        if tail.trim_start().starts_with(['/', '|']) {
            return Err(ProtocolError::UnknownAction(rest.trim().to_string()));
        }
        return Ok(action);
    }
    Err(ProtocolError::MissingDecision)
}

/// Queries the provider up to `1 + retry_limit` times with an identical
/// request; the first parseable reply wins. When every attempt fails the
/// record has no action and `failed` set, and is accounted as HOLD.
pub fn decide_with_retry(
    agent: &AgentSpec,
    ctx: &DailyContext,
    provider: &dyn CompletionProvider,
    cfg: &ProtocolConfig,
    clock: &dyn Clock,
) -> DecisionRecord {
    let prompt = build_decision_prompt(ctx);
    let request = CompletionRequest {
        model: agent.backbone.clone().unwrap_or_default(),
        system: prompt.system,
        user: prompt.user,
        temperature: cfg.temperature,
    };
    let started = clock.now();
    let mut last_reply = None;
    let mut action = None;
    let mut attempts = 0;
    for attempt in 1..=cfg.retry_limit + 1 {
        attempts = attempt;
        let tag = RequestTag {
            agent: agent.id(),
            symbol: ctx.asset.symbol().to_string(),
            date: ctx.date,
            attempt,
        };
        match provider.complete(&tag, &request) {
            Ok(reply) => {
                let parsed = parse_decision(&reply);
                last_reply = Some(reply);
                if let Ok(a) = parsed {
                    action = Some(a);
                    break;
                }
            }
            Err(err) => {
                tracing::warn!(agent = %agent.id(), %tag, %err, "completion failed");
            }
        }
    }
    let latency_ms = (clock.now() - started).num_milliseconds().max(0) as u64;
    DecisionRecord {
        agent: agent.clone(),
        asset: ctx.asset.clone(),
        date: ctx.date,
        phase: ctx.metadata.phase,
        failed: action.is_none(),
        action,
        attempts,
        raw_reply: last_reply,
        latency_ms,
        member_actions: Vec::new(),
    }
}

/// The action with strictly the greatest count; any tie for the top is HOLD.
pub fn majority_vote(actions: &[TradeAction]) -> Result<TradeAction, ProtocolError> {
    if actions.is_empty() {
        return Err(ProtocolError::EmptyVote);
    }
    let counts = TradeAction::ALL.map(|k| (k, actions.iter().filter(|a| **a == k).count()));
    let max = counts.iter().map(|(_, n)| *n).max().unwrap_or(0);
    let mut leaders = counts.iter().filter(|(_, n)| *n == max);
    match (leaders.next(), leaders.next()) {
        (Some((k, _)), None) => Ok(*k),
        _ => Ok(TradeAction::Hold),
    }
}

/// Pre-scripted daily actions per agent id.
#[derive(Debug, Clone, Default)]
pub struct ScriptBook {
    scripts: HashMap<String, BTreeMap<NaiveDate, TradeAction>>,
}

#[derive(Debug, Deserialize)]
struct ScriptRow {
    date: NaiveDate,
    action: String,
}

impl ScriptBook {
    pub fn insert(&mut self, agent_id: impl Into<String>, actions: BTreeMap<NaiveDate, TradeAction>) {
        self.scripts.insert(agent_id.into(), actions);
    }

    /// Reads a `date,action` CSV.
    pub fn read_script(path: &Path) -> Result<BTreeMap<NaiveDate, TradeAction>, ProtocolError> {
        let err = |e: &dyn std::fmt::Display| ProtocolError::Script(format!("{}: {e}", path.display()));
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| err(&e))?;
        let mut out = BTreeMap::new();
        for row in reader.deserialize::<ScriptRow>() {
            let row = row.map_err(|e| err(&e))?;
            out.insert(row.date, row.action.parse()?);
        }
        Ok(out)
    }

    /// Loads the `script` parameter of every Scripted agent (including
    /// ensemble members), resolving relative paths against `base`.
    pub fn load(agents: &[AgentSpec], base: &Path) -> Result<Self, ProtocolError> {
        let mut book = Self::default();
        let mut stack: Vec<&AgentSpec> = agents.iter().collect();
        while let Some(agent) = stack.pop() {
            stack.extend(agent.members.iter());
            if agent.framework != super::AgentFramework::Scripted {
                continue;
            }
            let Some(path) = agent.params.get("script") else {
                return Err(ProtocolError::InvalidAgent {
                    agent: agent.id(),
                    reason: "Scripted agents need a `script` parameter".into(),
                });
            };
            book.insert(agent.id(), Self::read_script(&base.join(path))?);
        }
        Ok(book)
    }

    /// Number of scripted days, or `None` when the agent has no script.
    pub fn action_count(&self, agent_id: &str) -> Option<usize> {
        self.scripts.get(agent_id).map(BTreeMap::len)
    }

    pub fn action(&self, agent_id: &str, date: NaiveDate) -> Option<TradeAction> {
        self.scripts.get(agent_id)?.get(&date).copied()
    }
}

/// A day missing from the script is recorded as a failed decision.
pub fn decide_scripted(agent: &AgentSpec, ctx: &DailyContext, book: &ScriptBook) -> DecisionRecord {
    let action = book.action(&agent.id(), ctx.date);
    DecisionRecord {
        agent: agent.clone(),
        asset: ctx.asset.clone(),
        date: ctx.date,
        phase: ctx.metadata.phase,
        failed: action.is_none(),
        action,
        attempts: 1,
        raw_reply: None,
        latency_ms: 0,
        member_actions: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;
    use crate::marketdata::{AssetClass, AssetId};
    use crate::protocol::{ContextMeta, Phase};
    use crate::provider::ProviderError;
    use proptest::prelude::*;
    use std::sync::Mutex;
    use TradeAction::*;

    #[test]
    fn parse_examples() {
        assert_eq!(parse_decision("…analysis…\n[Decision]: Buy"), Ok(Buy));
        assert_eq!(parse_decision("[decision]:   hold."), Ok(Hold));
        assert_eq!(parse_decision("I would buy"), Err(ProtocolError::MissingDecision));
    }

    #[test]
    fn parse_uses_last_tagged_line() {
        assert_eq!(parse_decision("[Decision]: Buy\nOn reflection:\n[Decision]: Sell"), Ok(Sell));
        assert_eq!(parse_decision("**[Decision]:** **SELL**"), Ok(Sell));
        assert!(parse_decision("[Decision]: Buy / Sell / Hold").is_err());
        assert!(parse_decision("[Decision]: Maybe").is_err());
        assert!(parse_decision("[Decision]:").is_err());
    }

    #[test]
    fn vote_examples() {
        assert_eq!(majority_vote(&[Buy, Buy, Sell, Hold, Buy]), Ok(Buy));
        assert_eq!(majority_vote(&[Buy, Sell, Hold, Hold, Sell]), Ok(Hold));
        assert_eq!(majority_vote(&[Buy, Sell]), Ok(Hold));
        assert_eq!(majority_vote(&[]), Err(ProtocolError::EmptyVote));
    }

    proptest! {
        #[test]
        fn vote_is_permutation_invariant(
            xs in proptest::collection::vec(prop_oneof![Just(Buy), Just(Sell), Just(Hold)], 1..12),
            seed in any::<u64>(),
        ) {
            let mut shuffled = xs.clone();
            let n = shuffled.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(majority_vote(&xs).unwrap(), majority_vote(&shuffled).unwrap());
        }
    }

    struct Scripted {
        replies: Vec<Result<String, ProviderError>>,
        calls: Mutex<Vec<(RequestTag, CompletionRequest)>>,
    }

    impl CompletionProvider for Scripted {
        fn complete(&self, tag: &RequestTag, req: &CompletionRequest) -> Result<String, ProviderError> {
            let mut calls = self.calls.lock().unwrap();
            calls.push((tag.clone(), req.clone()));
            self.replies[(calls.len() - 1).min(self.replies.len() - 1)].clone()
        }
    }

    fn ctx() -> DailyContext {
        let asset = AssetId::new("BTC", AssetClass::Crypto).unwrap();
        DailyContext {
            asset,
            date: NaiveDate::from_ymd_opt(2025, 8, 5).unwrap(),
            price_history: vec![],
            brief: None,
            recent_actions: vec![],
            metadata: ContextMeta {
                run_id: "r".into(),
                phase: Phase::Live,
            },
        }
    }

    #[test]
    fn retry_until_parseable() {
        let p = Scripted {
            replies: vec![Ok("garbage".into()), Ok("[Decision]: Sell".into())],
            calls: Mutex::default(),
        };
        let agent = AgentSpec::llm("A", "m");
        let rec = decide_with_retry(&agent, &ctx(), &p, &ProtocolConfig::default(), &FixedClock::default());
        assert_eq!(rec.action, Some(Sell));
        assert_eq!(rec.attempts, 2);
        assert!(!rec.failed);
        let calls = p.calls.lock().unwrap();
        assert_eq!(calls[0].1, calls[1].1, "retries resend the identical request");
        assert_eq!(calls[0].1.temperature, 0.5);
        assert_eq!((calls[0].0.attempt, calls[1].0.attempt), (1, 2));
    }

    #[test]
    fn exhaustion_is_hold_accounted_failure() {
        let p = Scripted {
            replies: vec![Ok("garbage".into()), Err(ProviderError::Unavailable("down".into()))],
            calls: Mutex::default(),
        };
        let agent = AgentSpec::llm("A", "m");
        let rec = decide_with_retry(&agent, &ctx(), &p, &ProtocolConfig::default(), &FixedClock::default());
        assert_eq!(rec.action, None);
        assert!(rec.failed);
        assert_eq!(rec.attempts, 4);
        assert_eq!(rec.accounted_action(), Hold);
        assert_eq!(p.calls.lock().unwrap().len(), 4);
    }

    #[test]
    fn zero_retries_means_one_call() {
        let p = Scripted {
            replies: vec![Ok("nope".into())],
            calls: Mutex::default(),
        };
        let cfg = ProtocolConfig {
            retry_limit: 0,
            ..Default::default()
        };
        let rec = decide_with_retry(&AgentSpec::llm("A", "m"), &ctx(), &p, &cfg, &FixedClock::default());
        assert_eq!(rec.attempts, 1);
        assert_eq!(p.calls.lock().unwrap().len(), 1);
    }

    #[test]
    fn scripted_agent_reads_csv() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("s.csv"), "date,action\n2025-08-05,SELL\n2025-08-06,buy\n").unwrap();
        let mut agent = AgentSpec::new("S", crate::protocol::AgentFramework::Scripted);
        agent.params.insert("script".into(), "s.csv".into());
        let book = ScriptBook::load(&[agent.clone()], dir.path()).unwrap();
        let rec = decide_scripted(&agent, &ctx(), &book);
        assert_eq!(rec.action, Some(Sell));
        let mut other_day = ctx();
        other_day.date = NaiveDate::from_ymd_opt(2025, 8, 7).unwrap();
        assert!(decide_scripted(&agent, &other_day, &book).failed);
    }
}
