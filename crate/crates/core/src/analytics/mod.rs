//! Performance metrics over daily return series and leaderboard assembly.

mod leaderboard;

pub use leaderboard::{
    leaderboard, leaderboard_csv, metrics_csv, LeaderboardEntry, LeaderboardFilter, LeaderboardRow,
};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::AssetClass;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("a metrics window needs at least one return")]
    EmptyWindow,
    #[error("return {value} at index {index} is not above -1")]
    ReturnOutOfRange { index: usize, value: f64 },
    #[error("periods per year must be positive, got {0}")]
    PeriodsPerYear(f64),
    #[error("cumulative return {0} is not above -1")]
    CumulativeOutOfRange(f64),
    #[error("volatility needs at least two returns unless all are zero")]
    InsufficientData,
}

/// Annualization basis: trading days for equities, calendar days for crypto.
pub const EQUITY_PERIODS_PER_YEAR: f64 = 252.0;
pub const CRYPTO_PERIODS_PER_YEAR: f64 = 365.0;

/// Annualization basis per asset class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodsPerYear {
    #[serde(default = "equity_ppy")]
    pub equity: f64,
    #[serde(default = "crypto_ppy")]
    pub crypto: f64,
}

fn equity_ppy() -> f64 {
    EQUITY_PERIODS_PER_YEAR
}
fn crypto_ppy() -> f64 {
    CRYPTO_PERIODS_PER_YEAR
}

impl Default for PeriodsPerYear {
    fn default() -> Self {
        Self {
            equity: EQUITY_PERIODS_PER_YEAR,
            crypto: CRYPTO_PERIODS_PER_YEAR,
        }
    }
}

impl PeriodsPerYear {
    pub fn for_class(&self, class: AssetClass) -> f64 {
        match class {
            AssetClass::Equity => self.equity,
            AssetClass::Crypto => self.crypto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsWindow {
    returns: Vec<f64>,
    periods_per_year: f64,
    risk_free: f64,
}

impl MetricsWindow {
    pub fn new(returns: Vec<f64>, periods_per_year: f64, risk_free: f64) -> Result<Self, AnalyticsError> {
        if returns.is_empty() {
            return Err(AnalyticsError::EmptyWindow);
        }
        if let Some((index, &value)) = returns.iter().enumerate().find(|(_, r)| !(**r > -1.0) || !r.is_finite()) {
            return Err(AnalyticsError::ReturnOutOfRange { index, value });
        }
        if !(periods_per_year > 0.0) {
            return Err(AnalyticsError::PeriodsPerYear(periods_per_year));
        }
        Ok(Self {
            returns,
            periods_per_year,
            risk_free,
        })
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn periods(&self) -> usize {
        self.returns.len()
    }

    pub fn periods_per_year(&self) -> f64 {
        self.periods_per_year
    }

    pub fn risk_free(&self) -> f64 {
        self.risk_free
    }

    fn mean_and_sample_variance(&self) -> (f64, Option<f64>) {
        // Welford
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (i, &r) in self.returns.iter().enumerate() {
            let delta = r - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (r - mean);
        }
        let n = self.returns.len();
        let var = (n > 1).then(|| m2 / (n - 1) as f64);
        (mean, var)
    }
}

pub fn cumulative_return(w: &MetricsWindow) -> f64 {
    w.returns.iter().fold(1.0, |acc, r| acc * (1.0 + r)) - 1.0
}

pub fn annualized_return(cr: f64, periods: usize, periods_per_year: f64) -> Result<f64, AnalyticsError> {
    if !(cr > -1.0) {
        return Err(AnalyticsError::CumulativeOutOfRange(cr));
    }
    if periods == 0 {
        return Err(AnalyticsError::EmptyWindow);
    }
    if !(periods_per_year > 0.0) {
        return Err(AnalyticsError::PeriodsPerYear(periods_per_year));
    }
    Ok((1.0 + cr).powf(periods_per_year / periods as f64) - 1.0)
}

/// Spread below this fraction of the largest |return| is rounding noise.
const NOISE_FLOOR: f64 = 1e-12;

/// `sqrt(ppy)` times the sample standard deviation of returns.
pub fn annualized_volatility(w: &MetricsWindow) -> Result<f64, AnalyticsError> {
    match w.mean_and_sample_variance() {
        (_, Some(var)) => {
            let sd = var.max(0.0).sqrt();
            let scale = w.returns.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
            if sd <= NOISE_FLOOR * scale {
                return Ok(0.0);
            }
            Ok(w.periods_per_year.sqrt() * sd)
        }
        (_, None) if w.returns.iter().all(|r| *r == 0.0) => Ok(0.0),
        (_, None) => Err(AnalyticsError::InsufficientData),
    }
}

/// Annualized mean excess return over annualized volatility. `None` when
/// volatility is zero (or undefined) and the excess return is not.
pub fn sharpe_ratio(w: &MetricsWindow) -> Option<f64> {
    let (mean, _) = w.mean_and_sample_variance();
    let excess = w.periods_per_year * mean - w.risk_free;
    match annualized_volatility(w) {
        Ok(av) if av > 0.0 => Some(excess / av),
        _ if excess == 0.0 => Some(0.0),
        _ => None,
    }
}

/// Largest fractional fall of the equity curve from a running peak, with
/// the starting equity of 1.0 counted as the first peak.
pub fn max_drawdown(w: &MetricsWindow) -> f64 {
    let mut equity = 1.0;
    let mut peak = 1.0;
    let mut worst = 0.0_f64;
    for r in &w.returns {
        equity *= 1.0 + r;
        if equity > peak {
            peak = equity;
        } else {
            worst = worst.max((peak - equity) / peak);
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub cr: f64,
    pub ar: f64,
    /// `None` only for a single nonzero return.
    pub av: Option<f64>,
    /// `None` when undefined; rendered as "—".
    pub sr: Option<f64>,
    pub mdd: f64,
    pub periods: usize,
    pub as_of: NaiveDate,
}

pub fn snapshot(w: &MetricsWindow, as_of: NaiveDate) -> MetricsSnapshot {
    let cr = cumulative_return(w);
    MetricsSnapshot {
        cr,
        ar: annualized_return(cr, w.periods(), w.periods_per_year).expect("window returns are above -1"),
        av: annualized_volatility(w).ok(),
        sr: sharpe_ratio(w),
        mdd: max_drawdown(w),
        periods: w.periods(),
        as_of,
    }
}

/// Percent with two decimals; never prints a negative zero.
pub fn fmt_percent(value: f64) -> String {
    fmt_fixed(value * 100.0)
}

pub fn fmt_fixed(value: f64) -> String {
    let s = format!("{value:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

pub fn fmt_optional(value: Option<f64>, f: fn(f64) -> String) -> String {
    value.map(f).unwrap_or_else(|| "—".to_string())
}
