//! Monthly agent-based simulator of the mortgage servicing ecosystem.
//!
//! Borrowers with heterogeneous finances learn when to pay, miss, accept relief
//! or fund a reserve account; a loss-mitigation servicer advances missed
//! payments and walks delinquent loans through repayment plans, forbearance,
//! modification and foreclosure; an exogenous economy drives income shocks and
//! the house price index. Runs emit per-quintile distress and servicer
//! profitability metrics.

pub mod domain;
pub mod economy;
pub mod engine;
pub mod error;
pub mod finance;
pub mod metrics;
pub mod policy;
pub mod population;
pub mod products;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod servicing;

pub use domain::{money_from_dollars, BorrowerId, IncomeQuintile, Money, Phase, Rate, SimClock};
pub use error::{Error, Result};
