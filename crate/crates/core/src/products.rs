//! Mortgage reserve accounts: a one-time fund that covers missed payments,
//! either granted upfront or built from a borrower contribution matched 1:1.

use serde::{Deserialize, Serialize};

use crate::domain::Money;
use crate::error::{Error, Result};
use crate::policy::MAX_MENU_SLOTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MraSource {
    Upfront,
    /// Borrower contribution; the account is funded at twice this amount.
    Matched(Money),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MraAccount {
    pub funded_total: Money,
    pub balance: Money,
    pub source: MraSource,
}

impl MraAccount {
    pub fn upfront(amount: Money) -> Result<Self> {
        if amount.is_negative() {
            return Err(Error::Config(format!(
                "reserve account amount must be >= 0, got {amount}"
            )));
        }
        Ok(MraAccount {
            funded_total: amount,
            balance: amount,
            source: MraSource::Upfront,
        })
    }

    pub fn paid_out(&self) -> Money {
        self.funded_total - self.balance
    }
}

/// Covers as much of `shortfall` as the balance allows; returns the amount drawn.
pub fn draw_for_missed_payment(account: &mut MraAccount, shortfall: Money) -> Money {
    let covered = shortfall.min(account.balance).clamp_non_negative();
    account.balance -= covered;
    covered
}

/// Moves `contribution` out of `savings` into a matched account worth twice as
/// much. A zero contribution opens no account.
pub fn enroll_matched(savings: &mut Money, contribution: Money) -> Result<Option<MraAccount>> {
    if contribution.is_negative() {
        return Err(Error::Config(format!(
            "contribution must be >= 0, got {contribution}"
        )));
    }
    if contribution > *savings {
        return Err(Error::LoanState(format!(
            "contribution {contribution} exceeds savings {}",
            *savings
        )));
    }
    if contribution.is_zero() {
        return Ok(None);
    }
    *savings -= contribution;
    let total = contribution + contribution;
    Ok(Some(MraAccount {
        funded_total: total,
        balance: total,
        source: MraSource::Matched(contribution),
    }))
}

/// Which reserve-account product a run offers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProductMode {
    #[default]
    Off,
    /// Every borrower starts evaluation with an account of each listed size,
    /// one variant per amount.
    Upfront { amounts: Vec<Money> },
    /// Borrowers choose a contribution from `menu` at the start of evaluation.
    Matched {
        #[serde(default = "default_menu")]
        menu: Vec<Money>,
    },
}

pub fn default_menu() -> Vec<Money> {
    [0, 500, 1000, 1750, 2500]
        .into_iter()
        .map(Money::dollars)
        .collect()
}

impl ProductMode {
    pub fn validate(&self, out: &mut Vec<String>) {
        match self {
            ProductMode::Off => {}
            ProductMode::Upfront { amounts } => {
                if amounts.is_empty() {
                    out.push("products.amounts must list at least one amount".into());
                }
                for a in amounts {
                    if a.is_negative() {
                        out.push(format!("products.amounts: amount must be >= 0, got {a}"));
                    }
                }
            }
            ProductMode::Matched { menu } => {
                if menu.is_empty() || menu.len() > MAX_MENU_SLOTS {
                    out.push(format!(
                        "products.menu must have 1 to {MAX_MENU_SLOTS} entries, got {}",
                        menu.len()
                    ));
                }
                for m in menu {
                    if m.is_negative() {
                        out.push(format!("products.menu: contribution must be >= 0, got {m}"));
                    }
                }
            }
        }
    }
}
