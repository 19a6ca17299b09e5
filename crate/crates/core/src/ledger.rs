//! Portfolio accounting: daily returns from signals, optional position-change
//! fees, and the compounding equity curve.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LedgerError {
    #[error("prices must be positive and finite (prev {prev}, curr {curr})")]
    NonPositivePrice { prev: f64, curr: f64 },
    #[error("return {0} would wipe out equity")]
    ReturnTooNegative(f64),
    #[error("fee must be non-negative, got {0} bps")]
    NegativeFee(f64),
    #[error("invalid signal {0}")]
    InvalidSignal(i64),
}

/// Full directional exposure: long, short, or flat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Signal {
    Short,
    Flat,
    Long,
}

impl Signal {
    pub fn value(self) -> i8 {
        match self {
            Signal::Short => -1,
            Signal::Flat => 0,
            Signal::Long => 1,
        }
    }
}

impl TryFrom<i8> for Signal {
    type Error = LedgerError;
    fn try_from(v: i8) -> Result<Self, LedgerError> {
        match v {
            -1 => Ok(Signal::Short),
            0 => Ok(Signal::Flat),
            1 => Ok(Signal::Long),
            other => Err(LedgerError::InvalidSignal(other.into())),
        }
    }
}

impl From<Signal> for i8 {
    fn from(s: Signal) -> i8 {
        s.value()
    }
}

pub fn daily_return(signal: Signal, p_prev: f64, p_curr: f64) -> Result<f64, LedgerError> {
    if !(p_prev > 0.0 && p_curr > 0.0 && p_prev.is_finite() && p_curr.is_finite()) {
        return Err(LedgerError::NonPositivePrice {
            prev: p_prev,
            curr: p_curr,
        });
    }
    Ok(f64::from(signal.value()) * (p_curr - p_prev) / p_prev)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeeModel {
    pub fee_bps: f64,
}

impl FeeModel {
    pub fn new(fee_bps: f64) -> Result<Self, LedgerError> {
        if !(fee_bps >= 0.0) {
            return Err(LedgerError::NegativeFee(fee_bps));
        }
        Ok(Self { fee_bps })
    }

    pub fn fraction(&self) -> f64 {
        self.fee_bps / 10_000.0
    }
}

/// Charges the fee multiplicatively on the period's gross growth when the
/// position changed.
pub fn apply_fees(gross: f64, position_changed: bool, fees: FeeModel) -> f64 {
    if position_changed && fees.fee_bps != 0.0 {
        (1.0 + gross) * (1.0 - fees.fraction()) - 1.0
    } else {
        gross
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquityPoint {
    pub date: NaiveDate,
    pub equity: f64,
    pub cumulative_return: f64,
}

impl EquityPoint {
    pub fn start(date: NaiveDate) -> Self {
        Self {
            date,
            equity: 1.0,
            cumulative_return: 0.0,
        }
    }
}

pub fn update_equity(prev: &EquityPoint, date: NaiveDate, r: f64) -> Result<EquityPoint, LedgerError> {
    if !(r > -1.0) {
        return Err(LedgerError::ReturnTooNegative(r));
    }
    let equity = prev.equity * (1.0 + r);
    Ok(EquityPoint {
        date,
        equity,
        cumulative_return: equity - 1.0,
    })
}
