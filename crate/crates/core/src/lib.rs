//! Core of the trading arena: market data, daily briefs, the agent
//! protocol, accounting, metrics, and the event log.

// `!(x > y)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod briefing;
pub mod clock;
pub mod config;
pub mod ledger;
pub mod marketdata;
pub mod persistence;
pub mod protocol;
pub mod provider;
