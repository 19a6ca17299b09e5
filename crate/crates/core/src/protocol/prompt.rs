use std::fmt;

use super::DailyContext;

const SYSTEM_TEMPLATE: &str = "\
You are a professional financial decision-making agent specialized in quantitative and fundamental reasoning with a daily trading frequency.
Your primary task is to analyze the reasoning outputs of other agent roles and integrate their insights into a unified, evidence-based conclusion.

Based on your analysis and the provided definitions, determine the most appropriate trading decision for the target asset [ASSET] given its current market price [PRICES] and contextual signals.

Your possible actions are defined as follows:

- Buy: Indicates a bullish outlook or perceived undervaluation, suggesting the asset price is likely to rise. And you choose to be in long position.

- Sell: Indicates a bearish outlook or perceived overvaluation, suggesting the asset price is likely to fall. And you choose to be in short position.

- Hold: Indicates market uncertainty or equilibrium, suggesting no immediate trading action. And you choose to go flat position.

Return your final output strictly in the following format:

[Decision]: Buy / Sell / Hold
";

pub const NO_NEWS_MARKER: &str = "No verified news available";

/// System prompt plus per-day user content, sent as one request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionPrompt {
    pub system: String,
    pub user: String,
}

impl fmt::Display for DecisionPrompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\n{}", self.system, self.user)
    }
}

pub fn build_decision_prompt(ctx: &DailyContext) -> DecisionPrompt {
    let symbol = ctx.asset.symbol();
    let prices = if ctx.price_history.is_empty() {
        "(no completed price history yet)".to_string()
    } else {
        let lines: Vec<String> = ctx
            .price_history
            .iter()
            .map(|b| format!("{}: {}", b.date, b.close))
            .collect();
        format!("(daily closes, oldest first)\n{}\n", lines.join("\n"))
    };
    let system = SYSTEM_TEMPLATE
        .replace("[ASSET]", symbol)
        .replace("[PRICES]", &prices);

    let mut user = format!(
        "Asset: {symbol} ({})\nDecision date: {}\nPhase: {:?}\nRun: {}\n\n",
        ctx.asset.asset_class(),
        ctx.date,
        ctx.metadata.phase,
        ctx.metadata.run_id,
    );
    match &ctx.brief {
        Some(brief) if !brief.summary.trim().is_empty() => {
            user.push_str(&format!("Verified news summary for {}:\n{}\n", brief.date, brief.summary.trim_end()));
        }
        Some(brief) => {
            user.push_str(&format!("Verified news summary for {}: no material news reported.\n", brief.date));
        }
        None => user.push_str(&format!("{NO_NEWS_MARKER} for {symbol} on {}.\n", ctx.date)),
    }
    user.push('\n');
    if ctx.recent_actions.is_empty() {
        user.push_str("Your recent actions: none.\n");
    } else {
        user.push_str("Your recent actions (oldest first):\n");
        for r in &ctx.recent_actions {
            let flag = if r.failed { " (no valid decision)" } else { "" };
            user.push_str(&format!("{}: {}{}\n", r.date, r.accounted_action(), flag));
        }
    }
    DecisionPrompt { system, user }
}
