//! Servicer agent: fees, advances, the loss-mitigation waterfall, foreclosure
//! and advance recovery. The mortgage owner is a passive ledger.
//!
//! Waterfall for a delinquent loan, one offer per rung:
//!
//! 1. repayment plan: arrears spread over extra monthly installments;
//! 2. forbearance: nothing due for a few months while arrears build;
//! 3. modification: arrears capitalized, term extended, payment recomputed.
//!
//! A loan that reaches the foreclosure trigger with no rung left to offer is
//! foreclosed. Advances are capped per loan and recovered as arrears are
//! repaid, in full on modification, and at `min(h, 1)` on foreclosure.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::domain::{BorrowerId, IncomeQuintile, Money};
use crate::error::{Error, Result};
use crate::finance::{Loan, LoanStatus};
use crate::policy::ReliefOffer;
use crate::population::BorrowerProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServicerConfig {
    /// Fee as a fraction of the scheduled monthly payment.
    pub monthly_fee_rate: f64,
    pub advance_cap_payments: u32,
    pub incentive_repayment: Money,
    pub incentive_forbearance: Money,
    pub incentive_modification: Money,
    pub foreclosure_trigger_months: u32,
    pub repayment_spread_months: u32,
    pub forbearance_max_months: u32,
    pub modification_term_extension_months: u32,
    /// Offer relief only to borrowers in hardship (see [`in_hardship`]).
    pub relief_requires_hardship: bool,
}

impl Default for ServicerConfig {
    fn default() -> Self {
        ServicerConfig {
            monthly_fee_rate: 0.0025,
            advance_cap_payments: 4,
            incentive_repayment: Money::dollars(500),
            incentive_forbearance: Money::dollars(500),
            incentive_modification: Money::dollars(1000),
            foreclosure_trigger_months: 4,
            repayment_spread_months: 6,
            forbearance_max_months: 6,
            modification_term_extension_months: 120,
            relief_requires_hardship: true,
        }
    }
}

impl ServicerConfig {
    pub fn validate(&self, out: &mut Vec<String>) {
        if !(self.monthly_fee_rate >= 0.0 && self.monthly_fee_rate.is_finite()) {
            out.push(format!(
                "servicer.monthly_fee_rate must be >= 0, got {}",
                self.monthly_fee_rate
            ));
        }
        for (name, m) in [
            ("incentive_repayment", self.incentive_repayment),
            ("incentive_forbearance", self.incentive_forbearance),
            ("incentive_modification", self.incentive_modification),
        ] {
            if m.is_negative() {
                out.push(format!("servicer.{name} must be >= 0, got {m}"));
            }
        }
        if self.advance_cap_payments < 1 {
            out.push("servicer.advance_cap_payments must be at least 1".into());
        }
        if self.foreclosure_trigger_months < 1 {
            out.push("servicer.foreclosure_trigger_months must be at least 1".into());
        }
        if self.repayment_spread_months < 1 {
            out.push("servicer.repayment_spread_months must be at least 1".into());
        }
        if self.forbearance_max_months < 1 {
            out.push("servicer.forbearance_max_months must be at least 1".into());
        }
    }

    pub fn incentive_for(&self, offer: ReliefOffer) -> Money {
        match offer {
            ReliefOffer::None => Money::ZERO,
            ReliefOffer::Repayment => self.incentive_repayment,
            ReliefOffer::Forbearance => self.incentive_forbearance,
            ReliefOffer::Modification => self.incentive_modification,
        }
    }
}

/// Servicer cash flows within one month.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthlyFlows {
    pub fees: Money,
    pub incentives: Money,
    pub advances: Money,
    pub recoveries: Money,
    pub write_offs: Money,
    pub mra_match: Money,
}

impl MonthlyFlows {
    /// Cash in minus cash out. Write-offs are the unrecovered part of earlier
    /// advances and move no cash.
    pub fn net_cash(&self) -> Money {
        self.fees + self.incentives + self.recoveries - self.advances - self.mra_match
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServicerBook {
    pub fee_income_cum: Money,
    pub incentives_cum: Money,
    pub advances_total_cum: Money,
    pub advances_outstanding: Money,
    pub advances_recovered_cum: Money,
    pub advances_written_off_cum: Money,
    pub mra_match_cum: Money,
    pub fee_income_by_quintile: [Money; 5],
    pub net_cash_by_month: Vec<Money>,
    pub monthly: Vec<MonthlyFlows>,
    current: MonthlyFlows,
    outstanding_by_loan: Vec<Money>,
}

impl ServicerBook {
    pub fn new(loan_count: usize) -> Self {
        ServicerBook {
            fee_income_cum: Money::ZERO,
            incentives_cum: Money::ZERO,
            advances_total_cum: Money::ZERO,
            advances_outstanding: Money::ZERO,
            advances_recovered_cum: Money::ZERO,
            advances_written_off_cum: Money::ZERO,
            mra_match_cum: Money::ZERO,
            fee_income_by_quintile: [Money::ZERO; 5],
            net_cash_by_month: Vec::new(),
            monthly: Vec::new(),
            current: MonthlyFlows::default(),
            outstanding_by_loan: vec![Money::ZERO; loan_count],
        }
    }

    pub fn outstanding_for(&self, id: BorrowerId) -> Money {
        self.outstanding_by_loan[id.0 as usize]
    }

    pub fn current_month(&self) -> &MonthlyFlows {
        &self.current
    }

    /// Closes the month's flows into the time series.
    pub fn close_month(&mut self) {
        self.net_cash_by_month.push(self.current.net_cash());
        self.monthly.push(self.current);
        self.current = MonthlyFlows::default();
    }

    /// `total advanced = outstanding + recovered + written off`, in cents.
    pub fn advances_conserved(&self) -> bool {
        let per_loan: Money = self.outstanding_by_loan.iter().sum();
        self.advances_total_cum
            == self.advances_outstanding
                + self.advances_recovered_cum
                + self.advances_written_off_cum
            && per_loan == self.advances_outstanding
            && self.outstanding_by_loan.iter().all(|m| !m.is_negative())
    }

    pub fn record_mra_match(&mut self, amount: Money) {
        self.mra_match_cum += amount;
        self.current.mra_match += amount;
    }

    fn recover(&mut self, id: BorrowerId, amount: Money) -> Money {
        let slot = &mut self.outstanding_by_loan[id.0 as usize];
        let recovered = amount.min(*slot).clamp_non_negative();
        *slot -= recovered;
        self.advances_outstanding -= recovered;
        self.advances_recovered_cum += recovered;
        self.current.recoveries += recovered;
        recovered
    }
}

/// Charges the monthly servicing fee on an active loan.
pub fn collect_fee(
    book: &mut ServicerBook,
    loan: &Loan,
    quintile: IncomeQuintile,
    config: &ServicerConfig,
) -> Money {
    if loan.status.is_closed() {
        return Money::ZERO;
    }
    let fee = loan.scheduled_payment.scale(config.monthly_fee_rate);
    book.fee_income_cum += fee;
    book.fee_income_by_quintile[quintile.slot()] += fee;
    book.current.fees += fee;
    fee
}

/// Advances up to `shortfall` to the owner, keeping the loan's outstanding
/// advances within `advance_cap_payments × scheduled_payment`.
pub fn advance_missed_payment(
    book: &mut ServicerBook,
    id: BorrowerId,
    loan: &Loan,
    shortfall: Money,
    config: &ServicerConfig,
) -> Money {
    let cap =
        Money::from_cents(loan.scheduled_payment.cents() * config.advance_cap_payments as i64);
    let headroom = (cap - book.outstanding_for(id)).clamp_non_negative();
    let amount = shortfall
        .min(loan.scheduled_payment)
        .min(headroom)
        .clamp_non_negative();
    if amount.is_positive() {
        book.outstanding_by_loan[id.0 as usize] += amount;
        book.advances_outstanding += amount;
        book.advances_total_cum += amount;
        book.current.advances += amount;
    }
    amount
}

/// Reimburses the servicer from repaid arrears; returns the amount recovered.
pub fn recover_advances_on_cure(
    book: &mut ServicerBook,
    id: BorrowerId,
    arrears_repaid: Money,
) -> Money {
    book.recover(id, arrears_repaid)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActivePlan {
    Repayment {
        start_month: u32,
        installments: Vec<Money>,
        next: usize,
    },
    Forbearance {
        start_month: u32,
        months_left: u32,
    },
}

/// Loss-mitigation state the servicer keeps per loan.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReliefHistory {
    /// Highest rung offered so far: 0 none, 1 repayment, 2 forbearance, 3 modification.
    pub highest_rung: u8,
    pub repayment_failed: bool,
    pub forbearance_completed: bool,
    pub pending_offer: ReliefOffer,
    pub active_plan: Option<ActivePlan>,
    pub accepted: Vec<ReliefOffer>,
}

fn rung(offer: ReliefOffer) -> u8 {
    match offer {
        ReliefOffer::None => 0,
        ReliefOffer::Repayment => 1,
        ReliefOffer::Forbearance => 2,
        ReliefOffer::Modification => 3,
    }
}

impl ReliefHistory {
    pub fn in_forbearance(&self) -> bool {
        matches!(self.active_plan, Some(ActivePlan::Forbearance { .. }))
    }
}

/// Amount the borrower owes this month, including any plan installment.
pub fn amount_due(loan: &Loan, history: &ReliefHistory) -> Money {
    if loan.status.is_closed() {
        return Money::ZERO;
    }
    let regular = if loan.remaining_months == 0 {
        Money::ZERO
    } else {
        loan.installment_due()
    };
    match &history.active_plan {
        Some(ActivePlan::Forbearance { .. }) => Money::ZERO,
        Some(ActivePlan::Repayment {
            installments, next, ..
        }) => {
            regular
                + installments
                    .get(*next)
                    .copied()
                    .unwrap_or(Money::ZERO)
                    .min(loan.arrears)
        }
        // outside a plan the borrower owes everything past due
        None => regular + loan.arrears,
    }
}

/// Net income no longer covers the scheduled payment.
pub fn in_hardship(profile: &BorrowerProfile) -> bool {
    profile.monthly_income - profile.nonhousing_expense < profile.loan.scheduled_payment
}

/// Next rung of the waterfall for a delinquent loan with no active plan.
pub fn offer_relief(
    loan: &Loan,
    history: &ReliefHistory,
    config: &ServicerConfig,
    hardship: bool,
) -> Option<ReliefOffer> {
    if loan.status.is_closed() || history.active_plan.is_some() || loan.months_delinquent == 0 {
        return None;
    }
    if config.relief_requires_hardship && !hardship {
        return None;
    }
    let delinquent = loan.months_delinquent;
    let below_trigger = delinquent < config.foreclosure_trigger_months;
    match history.highest_rung {
        0 if delinquent == 1 => Some(ReliefOffer::Repayment),
        0 | 1 if below_trigger => Some(ReliefOffer::Forbearance),
        // a completed forbearance always leads to a modification review
        2 if below_trigger || history.forbearance_completed => Some(ReliefOffer::Modification),
        _ => None,
    }
}

/// Records that `offer` was made; offers never go down the waterfall.
pub fn make_offer(history: &mut ReliefHistory, offer: ReliefOffer) {
    debug_assert!(rung(offer) > history.highest_rung);
    history.highest_rung = history.highest_rung.max(rung(offer));
    history.pending_offer = offer;
}

/// Puts an accepted offer into effect and credits the incentive.
pub fn apply_relief(
    loan: &mut Loan,
    history: &mut ReliefHistory,
    id: BorrowerId,
    offer: ReliefOffer,
    book: &mut ServicerBook,
    config: &ServicerConfig,
    month: u32,
) -> Result<()> {
    if loan.status.is_closed() {
        return Err(Error::LoanState(format!(
            "cannot apply {offer:?} to a loan in status {:?}",
            loan.status
        )));
    }
    if history.active_plan.is_some() {
        return Err(Error::LoanState(
            "loan already has an active relief plan".into(),
        ));
    }
    match offer {
        ReliefOffer::None => return Err(Error::LoanState("no relief offer to apply".into())),
        ReliefOffer::Repayment => {
            let installments = loan.arrears.split_even(config.repayment_spread_months);
            history.active_plan = Some(ActivePlan::Repayment {
                start_month: month,
                installments,
                next: 0,
            });
            loan.status = LoanStatus::InRelief;
        }
        ReliefOffer::Forbearance => {
            history.active_plan = Some(ActivePlan::Forbearance {
                start_month: month,
                months_left: config.forbearance_max_months,
            });
            loan.delinquency_frozen = true;
            loan.status = LoanStatus::InRelief;
        }
        ReliefOffer::Modification => {
            loan.capitalize_and_extend(config.modification_term_extension_months)?;
            // the owner is made whole through the modified loan
            let outstanding = book.outstanding_for(id);
            book.recover(id, outstanding);
        }
    }
    let incentive = config.incentive_for(offer);
    book.incentives_cum += incentive;
    book.current.incentives += incentive;
    history.pending_offer = ReliefOffer::None;
    history.accepted.push(offer);
    Ok(())
}

/// Moves an active plan forward after this month's payment.
pub fn advance_plan(loan: &mut Loan, history: &mut ReliefHistory, paid_in_full: bool) {
    let Some(plan) = history.active_plan.as_mut() else {
        return;
    };
    match plan {
        ActivePlan::Repayment {
            installments, next, ..
        } => {
            if !paid_in_full {
                history.repayment_failed = true;
                history.active_plan = None;
            } else {
                *next += 1;
                if *next >= installments.len() || loan.arrears.is_zero() {
                    history.active_plan = None;
                }
            }
        }
        ActivePlan::Forbearance { months_left, .. } => {
            *months_left = months_left.saturating_sub(1);
            if *months_left == 0 {
                history.active_plan = None;
                history.forbearance_completed = true;
                loan.delinquency_frozen = false;
            }
        }
    }
    if history.active_plan.is_none() && loan.status == LoanStatus::InRelief {
        loan.status = LoanStatus::Current;
    }
    loan.refresh_delinquency();
}

/// Whether the loan meets the foreclosure preconditions.
pub fn foreclosure_due(
    loan: &Loan,
    history: &ReliefHistory,
    config: &ServicerConfig,
    hardship: bool,
) -> bool {
    loan.is_active()
        && loan.months_delinquent >= config.foreclosure_trigger_months
        && history.active_plan.is_none()
        && history.pending_offer == ReliefOffer::None
        && offer_relief(loan, history, config, hardship).is_none()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForeclosureOutcome {
    pub recovered: Money,
    pub written_off: Money,
}

/// Completes a foreclosure; the servicer recovers `min(h, 1)` of the loan's
/// outstanding advances and writes off the rest.
pub fn trigger_foreclosure(
    loan: &mut Loan,
    history: &ReliefHistory,
    id: BorrowerId,
    book: &mut ServicerBook,
    h: f64,
    config: &ServicerConfig,
    hardship: bool,
) -> Result<ForeclosureOutcome> {
    if !foreclosure_due(loan, history, config, hardship) {
        return Err(Error::LoanState(format!(
            "foreclosure needs {} months of delinquency with relief exhausted (loan has {})",
            config.foreclosure_trigger_months, loan.months_delinquent
        )));
    }
    let outstanding = book.outstanding_for(id);
    let recovery_rate = h.clamp(0.0, 1.0);
    let recovered = book.recover(id, outstanding.scale(recovery_rate));
    let written_off = book.outstanding_for(id);
    book.outstanding_by_loan[id.0 as usize] = Money::ZERO;
    book.advances_outstanding -= written_off;
    book.advances_written_off_cum += written_off;
    book.current.write_offs += written_off;
    loan.status = LoanStatus::ForeclosureCompleted;
    Ok(ForeclosureOutcome {
        recovered,
        written_off,
    })
}

/// Servicer net cash over `window` (month indices) per borrower.
pub fn net_profit_per_borrower(
    book: &ServicerBook,
    n_borrowers: usize,
    window: Range<usize>,
) -> Result<Money> {
    if n_borrowers == 0 {
        return Err(Error::Config(
            "net profit needs at least one borrower".into(),
        ));
    }
    let end = window.end.min(book.net_cash_by_month.len());
    let start = window.start.min(end);
    let total: Money = book.net_cash_by_month[start..end].iter().sum();
    Ok(Money::from_f64_cents(
        total.cents() as f64 / n_borrowers as f64,
    ))
}

/// Passive mortgage owner: receives payments and advances, funds fees and incentives.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MortgageOwner {
    pub cash: Money,
    pub borrower_receipts_cum: Money,
    pub advances_received_cum: Money,
}
