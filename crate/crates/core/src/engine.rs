//! Monthly simulation loop, training episodes and evaluation runs.
//!
//! Each month runs the same sub-steps in order:
//!
//! 1. economy: income shocks, then the house price index;
//! 2. borrowers: income arrives, nonhousing costs are paid, each active
//!    borrower observes and acts once (pay, miss, answer a relief offer or a
//!    reserve-account invitation);
//! 3. reserve-account draws against any shortfall;
//! 4. servicer: payments applied, fees, advances and recoveries, plan
//!    progress, new relief offers, foreclosures;
//! 5. rewards, and learner updates during training;
//! 6. the month is closed and checked for money conservation.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{BorrowerId, Money, Phase, SimClock};
use crate::economy::{
    apply_eval_shock, sample_train_shocks, shocked_income, step_hpi, EconomyState, EvalShock,
    HpiPath, ShockMode, ShockProcess,
};
use crate::error::{Error, Result};
use crate::finance::{liquidity_component, utility, EquityBasis, UtilityParams};
use crate::metrics::{ActionCounts, BorrowerHistory, MetricsBundle, RunMeta};
use crate::policy::{
    encode_observation, step_reward, tabular_learner, Action, LearnerParams, LearnerSnapshot,
    Observation, ObservationContext, PolicyLearner, ReliefOffer,
};
use crate::population::{sample_population, BorrowerProfile, DistributionConfig};
use crate::products::{draw_for_missed_payment, enroll_matched, MraAccount};
use crate::rng::{substream, SimRng, Stream};
use crate::servicing::{
    advance_missed_payment, advance_plan, amount_due, apply_relief, collect_fee, foreclosure_due,
    in_hardship, make_offer, offer_relief, recover_advances_on_cure, trigger_foreclosure,
    MortgageOwner, ReliefHistory, ServicerBook, ServicerConfig,
};

/// Everything a simulation needs apart from the seed and the product variant.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub n_borrowers: usize,
    pub population: DistributionConfig,
    pub hpi: HpiPath,
    pub shocks: ShockProcess,
    pub servicer: ServicerConfig,
    pub learner: LearnerParams,
    pub equity_basis: EquityBasis,
    /// One learner per borrower instead of one per income quintile.
    pub individual_learners: bool,
    pub train_months: u32,
    pub train_episodes: u32,
    pub eval_months: u32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            n_borrowers: 1000,
            population: DistributionConfig::default(),
            hpi: HpiPath::Constant,
            shocks: ShockProcess::default(),
            servicer: ServicerConfig::default(),
            learner: LearnerParams::default(),
            equity_basis: EquityBasis::default(),
            individual_learners: false,
            train_months: 60,
            train_episodes: 12,
            eval_months: 24,
        }
    }
}

/// Reserve-account product in force for a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reserve {
    None,
    /// Every borrower holds an account of this size from the first month.
    Upfront(Money),
    /// Borrowers may fund a matched account in the first month.
    Matched(Vec<Money>),
}

/// The learners driving borrower decisions.
///
/// Learners see each borrower's utility relative to the utility that borrower
/// would have on an untouched schedule, and a loan that closes is charged the
/// discounted stream it would go on to earn against the baseline. The baseline depends only on the
/// borrower and the month, never on actions.
pub struct LearnerPool {
    learners: Vec<Box<dyn PolicyLearner>>,
    individual: bool,
    discount: f64,
}

impl LearnerPool {
    pub fn new(params: LearnerParams, individual: bool, n_borrowers: usize) -> Result<Self> {
        let count = if individual { n_borrowers } else { 5 };
        let learners = (0..count)
            .map(|_| tabular_learner(params))
            .collect::<Result<Vec<_>>>()?;
        Ok(LearnerPool {
            learners,
            individual,
            discount: params.discount,
        })
    }

    pub fn from_snapshots(
        params: LearnerParams,
        individual: bool,
        snapshots: &[LearnerSnapshot],
    ) -> Result<Self> {
        let mut pool = LearnerPool::new(params, individual, snapshots.len())?;
        if !individual && snapshots.len() != 5 {
            return Err(Error::Snapshot(format!(
                "expected 5 quintile learners, got {}",
                snapshots.len()
            )));
        }
        pool.restore(snapshots)?;
        Ok(pool)
    }

    pub fn len(&self) -> usize {
        self.learners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.learners.is_empty()
    }

    fn slot(&self, profile: &BorrowerProfile) -> usize {
        if self.individual {
            profile.id.0 as usize
        } else {
            profile.quintile.slot()
        }
    }

    pub fn snapshots(&self) -> Vec<LearnerSnapshot> {
        self.learners.iter().map(|l| l.snapshot()).collect()
    }

    pub fn restore(&mut self, snapshots: &[LearnerSnapshot]) -> Result<()> {
        if snapshots.len() != self.learners.len() {
            return Err(Error::Snapshot(format!(
                "expected {} learner snapshots, got {}",
                self.learners.len(),
                snapshots.len()
            )));
        }
        for (l, s) in self.learners.iter_mut().zip(snapshots) {
            l.restore(s)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Transition {
    obs: Observation,
    action: Action,
    reward: f64,
}

/// Utility of the starting schedule kept to the letter: starting liquidity, and
/// equity growing by one scheduled payment a month.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBaseline {
    pub gamma: f64,
    pub liquidity: f64,
    pub paid: Money,
    pub payment: Money,
    pub denominator: Money,
}

impl RewardBaseline {
    pub fn new(profile: &BorrowerProfile, basis: EquityBasis) -> Self {
        let loan = &profile.loan;
        RewardBaseline {
            gamma: profile.gamma,
            liquidity: liquidity_component(loan.scheduled_payment, profile.monthly_income),
            paid: loan.payments_made_total,
            payment: loan.scheduled_payment,
            denominator: match basis {
                EquityBasis::TotalScheduled => loan.obligation_total,
                EquityBasis::Principal => loan.original_principal,
            },
        }
    }

    /// Baseline utility after the payment of `month` (zero-based).
    pub fn at(&self, month: u32, h: f64) -> f64 {
        let paid = self.paid + Money::from_cents(self.payment.cents() * (i64::from(month) + 1));
        let equity = paid.ratio(self.denominator).clamp(0.0, 1.0);
        utility(
            UtilityParams { gamma: self.gamma },
            self.liquidity,
            equity,
            h,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorrowerState {
    pub profile: BorrowerProfile,
    /// Income before any shock this run.
    pub base_income: Money,
    pub relief: ReliefHistory,
    pub mra: Option<MraAccount>,
    pub history: BorrowerHistory,
    pub baseline: RewardBaseline,
    /// Active training shocks: income factor and the month it lapses.
    shocks: Vec<(f64, Option<u32>)>,
    pending: Option<Transition>,
}

impl BorrowerState {
    pub fn is_active(&self) -> bool {
        self.profile.loan.is_active()
    }

    fn recompute_income(&mut self) {
        let factor: f64 = self.shocks.iter().map(|(f, _)| f).product();
        self.profile.monthly_income = shocked_income(self.base_income, factor);
    }
}

/// Money movements of one month, used for the conservation check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthLedger {
    pub month: u32,
    pub income: Money,
    pub consumption: Money,
    /// Foreclosure sale proceeds paid to the servicer.
    pub liquidation_proceeds: Money,
    pub holdings_before: Money,
    pub holdings_after: Money,
}

impl MonthLedger {
    /// Change in money held inside the system equals what flowed in minus what flowed out.
    pub fn balanced(&self) -> bool {
        self.holdings_after - self.holdings_before
            == self.income - self.consumption + self.liquidation_proceeds
    }
}

/// Summary of one simulated month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthRecord {
    pub ledger: MonthLedger,
    pub mean_reward: f64,
    pub actions: ActionCounts,
    pub active_loans: usize,
    pub delinquent_loans: usize,
}

struct Decision {
    due: Money,
    paid: Money,
    obs: Observation,
    action: Action,
}

pub struct World {
    pub clock: SimClock,
    pub borrowers: Vec<BorrowerState>,
    pub economy: EconomyState,
    pub book: ServicerBook,
    pub owner: MortgageOwner,
    pub servicer_config: ServicerConfig,
    pub equity_basis: EquityBasis,
    pub eval_shock: Option<EvalShock>,
    pub menu: Option<Vec<Money>>,
    pub ledgers: Vec<MonthLedger>,
    servicer_cash: Money,
    rng_economy: SimRng,
    rng_hpi: SimRng,
    rng_explore: SimRng,
    rng_eval_shock: SimRng,
}

/// Actions open to a borrower who owes `due` with `cash` on hand after
/// nonhousing costs, of which `net_income` came in this month.
pub fn payment_actions(due: Money, net_income: Money, cash: Money) -> Vec<Action> {
    if due.is_zero() {
        return vec![Action::PayFull];
    }
    let mut legal = Vec::with_capacity(2);
    if net_income >= due {
        legal.push(Action::PayFull);
    } else if cash >= due {
        legal.push(Action::PaySavings);
    }
    legal.push(Action::Miss);
    legal
}

/// Enrollment choices: declining, or any positive menu entry covered by `cash`.
pub fn enrollment_actions(menu: &[Money], cash: Money) -> Vec<Action> {
    let mut legal = vec![Action::DeclineMatchedMra];
    for (slot, &amount) in menu.iter().enumerate() {
        if amount.is_positive() && amount <= cash {
            legal.push(Action::EnrollMatchedMra {
                slot: slot as u8,
                amount,
            });
        }
    }
    legal
}

impl World {
    /// Samples a population and sets up a world. `episode` selects independent
    /// random streams; evaluation uses episode 0.
    pub fn new(
        config: &EngineConfig,
        seed: u64,
        phase: Phase,
        episode: u64,
        reserve: &Reserve,
    ) -> Result<World> {
        let mut pop_rng = substream(seed, Stream::Population, episode);
        let profiles = sample_population(&config.population, config.n_borrowers, &mut pop_rng)?;
        let mode = match phase {
            Phase::Train => ShockMode::TrainRandom,
            Phase::Evaluate => ShockMode::EvalDeterministic,
        };
        let mut borrowers = Vec::with_capacity(profiles.len());
        let economy = EconomyState::new(config.hpi, config.shocks.clone(), mode);
        for profile in profiles {
            let mra = match reserve {
                Reserve::Upfront(m) if m.is_positive() => Some(MraAccount::upfront(*m)?),
                _ => None,
            };
            borrowers.push(BorrowerState {
                base_income: profile.monthly_income,
                baseline: RewardBaseline::new(&profile, config.equity_basis),
                relief: ReliefHistory::default(),
                mra,
                history: BorrowerHistory::new(profile.quintile),
                shocks: Vec::new(),
                pending: None,
                profile,
            });
        }
        let menu = match reserve {
            Reserve::Matched(menu) => Some(menu.clone()),
            _ => None,
        };
        let n = borrowers.len();
        Ok(World {
            clock: SimClock::new(phase),
            borrowers,
            economy,
            book: ServicerBook::new(n),
            owner: MortgageOwner::default(),
            servicer_config: config.servicer.clone(),
            equity_basis: config.equity_basis,
            eval_shock: None,
            menu,
            ledgers: Vec::new(),
            servicer_cash: Money::ZERO,
            rng_economy: substream(seed, Stream::Economy, episode),
            rng_hpi: substream(seed, Stream::Hpi, episode),
            rng_explore: substream(seed, Stream::Exploration, episode),
            rng_eval_shock: substream(seed, Stream::EvalShock, episode),
        })
    }

    /// Money held by borrowers, servicer, owner and reserve accounts.
    pub fn holdings(&self) -> Money {
        let borrowers: Money = self.borrowers.iter().map(|b| b.profile.savings).sum();
        let reserves: Money = self
            .borrowers
            .iter()
            .filter_map(|b| b.mra.map(|a| a.balance))
            .sum();
        borrowers + reserves + self.servicer_cash + self.owner.cash
    }

    /// SHA-256 over the full simulation state.
    pub fn state_digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.clock.month.to_le_bytes());
        hasher.update(self.economy.h.to_le_bytes());
        hasher.update(serde_json::to_vec(&self.borrowers).expect("state serializes"));
        hasher.update(serde_json::to_vec(&self.book).expect("state serializes"));
        hasher.update(serde_json::to_vec(&self.owner).expect("state serializes"));
        hex::encode(hasher.finalize())
    }

    pub fn all_closed(&self) -> bool {
        self.borrowers.iter().all(|b| !b.is_active())
    }

    fn step_economy(&mut self) -> Result<()> {
        let month = self.clock.month;
        match self.economy.mode {
            ShockMode::TrainRandom => {
                let duration = self.economy.shocks.shock_duration_months;
                for b in self.borrowers.iter_mut() {
                    b.shocks
                        .retain(|&(_, until)| until.is_none_or(|u| u > month));
                }
                for shock in sample_train_shocks(
                    &self.economy.shocks,
                    self.borrowers.len(),
                    &mut self.rng_economy,
                ) {
                    let b = &mut self.borrowers[shock.borrower];
                    b.shocks.push((shock.factor(), duration.map(|d| month + d)));
                }
                for b in self.borrowers.iter_mut() {
                    b.recompute_income();
                }
            }
            ShockMode::EvalDeterministic => {
                if let Some(shock) = self.eval_shock.filter(|s| s.month == month) {
                    let mut incomes: Vec<Money> = self
                        .borrowers
                        .iter()
                        .map(|b| b.profile.monthly_income)
                        .collect();
                    apply_eval_shock(&mut incomes, &shock, &mut self.rng_eval_shock)?;
                    for (b, income) in self.borrowers.iter_mut().zip(incomes) {
                        b.profile.monthly_income = income;
                    }
                }
            }
        }
        step_hpi(&mut self.economy, &mut self.rng_hpi);
        Ok(())
    }

    fn decide(
        &mut self,
        i: usize,
        pool: &mut LearnerPool,
        explore: bool,
        learn: bool,
    ) -> Result<Decision> {
        let month = self.clock.month;
        let h = self.economy.h;
        let b = &mut self.borrowers[i];
        let id = b.profile.id;
        let offer = b.relief.pending_offer;
        let enrollment = month == 0 && b.mra.is_none() && self.menu.is_some();

        let net_income = b.profile.monthly_income - b.profile.nonhousing_expense;
        let cash = b.profile.savings;
        let mut due = amount_due(&b.profile.loan, &b.relief);
        let legal = if enrollment {
            enrollment_actions(self.menu.as_deref().unwrap_or(&[]), cash)
        } else if offer != ReliefOffer::None {
            vec![Action::AcceptRelief, Action::DeclineRelief]
        } else {
            payment_actions(due, net_income, cash)
        };
        let ctx = ObservationContext {
            payment_due: due,
            relief_offer: offer,
            h,
            mra_available: enrollment,
            reserve_balance: b.mra.map_or(Money::ZERO, |a| a.balance),
        };
        let obs = encode_observation(&b.profile, &ctx);

        let slot = pool.slot(&b.profile);
        let learner = &mut pool.learners[slot];
        if let Some(t) = b.pending.take() {
            if learn {
                learner.learn(&t.obs, t.action, t.reward, &obs, &legal, false);
            }
        }
        let action = learner.act(&obs, &legal, explore, &mut self.rng_explore);

        let paid = match action {
            Action::PayFull | Action::PaySavings => due,
            Action::Miss => Money::ZERO,
            Action::AcceptRelief | Action::DeclineRelief => {
                if action == Action::AcceptRelief {
                    let before = self.book.outstanding_for(id);
                    let incentive = self.servicer_config.incentive_for(offer);
                    apply_relief(
                        &mut b.profile.loan,
                        &mut b.relief,
                        id,
                        offer,
                        &mut self.book,
                        &self.servicer_config,
                        month,
                    )?;
                    // the owner funds incentives and reimburses advances on modification
                    let reimbursed = before - self.book.outstanding_for(id);
                    self.owner.cash -= incentive + reimbursed;
                    self.servicer_cash += incentive + reimbursed;
                } else {
                    b.relief.pending_offer = ReliefOffer::None;
                }
                due = amount_due(&b.profile.loan, &b.relief);
                if cash >= due {
                    due
                } else {
                    Money::ZERO
                }
            }
            Action::DeclineMatchedMra => {
                b.history.mra_contribution = Some(Money::ZERO);
                if cash >= due {
                    due
                } else {
                    Money::ZERO
                }
            }
            Action::EnrollMatchedMra { amount, .. } => {
                let account = enroll_matched(&mut b.profile.savings, amount)?;
                if let Some(account) = account {
                    // the servicer supplies the match
                    self.book.record_mra_match(amount);
                    self.servicer_cash -= amount;
                    b.mra = Some(account);
                }
                b.history.mra_contribution = Some(amount);
                if cash - amount >= due {
                    due
                } else {
                    Money::ZERO
                }
            }
        };
        b.profile.savings -= paid;
        Ok(Decision {
            due,
            paid,
            obs,
            action,
        })
    }

    /// Runs one month. With `learn` set, learners are updated from the
    /// resulting transitions.
    pub fn step(
        &mut self,
        pool: &mut LearnerPool,
        explore: bool,
        learn: bool,
    ) -> Result<MonthRecord> {
        let month = self.clock.month;
        let holdings_before = self.holdings();
        let mut ledger = MonthLedger {
            month,
            holdings_before,
            ..MonthLedger::default()
        };
        let mut actions = ActionCounts::default();

        // 1. economy
        self.step_economy()?;
        let h = self.economy.h;

        // 2. borrowers
        let n = self.borrowers.len();
        let mut decisions: Vec<Option<Decision>> = Vec::with_capacity(n);
        for i in 0..n {
            if !self.borrowers[i].is_active() {
                decisions.push(None);
                continue;
            }
            let b = &mut self.borrowers[i];
            let income = b.profile.monthly_income;
            b.profile.savings += income;
            let consumption = b.profile.nonhousing_expense.min(b.profile.savings);
            b.profile.savings -= consumption;
            ledger.income += income;
            ledger.consumption += consumption;
            let d = self.decide(i, pool, explore, learn)?;
            match d.action {
                Action::PayFull => actions.pay_full += 1,
                Action::PaySavings => actions.pay_savings += 1,
                Action::Miss => actions.miss += 1,
                Action::AcceptRelief => actions.accept_relief += 1,
                Action::DeclineRelief => actions.decline_relief += 1,
                Action::DeclineMatchedMra => actions.decline_enroll += 1,
                Action::EnrollMatchedMra { .. } => actions.enroll += 1,
            }
            decisions.push(Some(d));
        }

        // 3. reserve-account draws
        let mut covered = vec![Money::ZERO; n];
        for (i, d) in decisions.iter().enumerate() {
            let Some(d) = d else { continue };
            let shortfall = d.due - d.paid;
            if let (true, Some(account)) = (shortfall.is_positive(), self.borrowers[i].mra.as_mut())
            {
                covered[i] = draw_for_missed_payment(account, shortfall);
            }
        }

        // 4. servicer
        let config = self.servicer_config.clone();
        let mut done = vec![false; n];
        let mut foreclosed = vec![false; n];
        for (i, d) in decisions.iter().enumerate() {
            let Some(d) = d else { continue };
            let b = &mut self.borrowers[i];
            let id = BorrowerId(i as u32);
            let hardship = in_hardship(&b.profile);
            let loan = &mut b.profile.loan;
            let contractual = if loan.remaining_months == 0 {
                Money::ZERO
            } else {
                loan.installment_due()
            };
            let arrears_before = loan.arrears;
            let fee = collect_fee(&mut self.book, loan, b.profile.quintile, &config);
            let amount = d.paid + covered[i];
            let breakdown = loan.apply_payment(amount)?;
            b.profile.savings += breakdown.refund;
            let applied = breakdown.applied();
            let advance =
                advance_missed_payment(&mut self.book, id, loan, contractual - applied, &config);
            let recovered = recover_advances_on_cure(
                &mut self.book,
                id,
                (arrears_before - loan.arrears).clamp_non_negative(),
            );
            self.owner.cash += applied - recovered + advance - fee;
            self.owner.borrower_receipts_cum += applied;
            self.owner.advances_received_cum += advance;
            self.servicer_cash += fee + recovered - advance;

            let paid_in_full = amount >= d.due;
            if !paid_in_full {
                b.history.missed_months.push(month);
            } else if covered[i].is_positive() {
                b.history.covered_months.push(month);
            }
            advance_plan(loan, &mut b.relief, paid_in_full);

            if b.relief.pending_offer == ReliefOffer::None {
                if let Some(offer) = offer_relief(loan, &b.relief, &config, hardship) {
                    make_offer(&mut b.relief, offer);
                }
            }
            if foreclosure_due(loan, &b.relief, &config, hardship) {
                let outcome =
                    trigger_foreclosure(loan, &b.relief, id, &mut self.book, h, &config, hardship)?;
                self.servicer_cash += outcome.recovered;
                ledger.liquidation_proceeds += outcome.recovered;
                b.history.foreclosed_month = Some(month);
                foreclosed[i] = true;
            }
            done[i] = loan.status.is_closed();
        }

        // 5. rewards
        let mut reward_sum = 0.0;
        let mut acted = 0usize;
        for (i, d) in decisions.into_iter().enumerate() {
            let Some(d) = d else { continue };
            let b = &mut self.borrowers[i];
            let reward = if foreclosed[i] {
                0.0
            } else {
                step_reward(&b.profile, h, self.equity_basis)
            };
            reward_sum += reward;
            acted += 1;
            let baseline = b.baseline.at(month, h);
            let centered = reward - baseline;
            if done[i] {
                if learn {
                    // a foreclosed household earns nothing from here on, a paid-off
                    // one keeps this month's utility
                    let after = if foreclosed[i] { 0.0 } else { reward };
                    let tail = (after - baseline) * pool.discount / (1.0 - pool.discount);
                    let slot = pool.slot(&b.profile);
                    pool.learners[slot].learn(&d.obs, d.action, centered + tail, &d.obs, &[], true);
                }
                b.pending = None;
            } else {
                b.pending = Some(Transition {
                    obs: d.obs,
                    action: d.action,
                    reward: centered,
                });
            }
        }

        // 6. close the month
        self.book.close_month();
        ledger.holdings_after = self.holdings();
        if !ledger.balanced() {
            return Err(Error::Invariant(format!(
                "money not conserved in month {month}: holdings moved by {} but net inflow was {}",
                ledger.holdings_after - ledger.holdings_before,
                ledger.income - ledger.consumption + ledger.liquidation_proceeds
            )));
        }
        if !self.book.advances_conserved() {
            return Err(Error::Invariant(format!(
                "advance ledger out of balance in month {month}"
            )));
        }
        self.ledgers.push(ledger);
        self.clock.tick();

        let active_loans = self.borrowers.iter().filter(|b| b.is_active()).count();
        let delinquent_loans = self
            .borrowers
            .iter()
            .filter(|b| b.is_active() && b.profile.loan.months_delinquent > 0)
            .count();
        Ok(MonthRecord {
            ledger,
            mean_reward: if acted == 0 {
                0.0
            } else {
                reward_sum / acted as f64
            },
            actions,
            active_loans,
            delinquent_loans,
        })
    }

    /// Hash of the initial population, used to check that runs are paired.
    pub fn population_hash(&self) -> String {
        let profiles: Vec<&BorrowerProfile> = self.borrowers.iter().map(|b| &b.profile).collect();
        let digest = Sha256::digest(serde_json::to_vec(&profiles).expect("profiles serialize"));
        hex::encode(&digest[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean per-step reward of each episode.
    pub mean_reward_by_episode: Vec<f64>,
}

/// Trains `pool` over `config.train_episodes` fresh populations.
pub fn run_training(
    config: &EngineConfig,
    seed: u64,
    reserve: &Reserve,
    pool: &mut LearnerPool,
) -> Result<TrainingReport> {
    let mut report = TrainingReport {
        mean_reward_by_episode: Vec::new(),
    };
    for episode in 0..config.train_episodes {
        let mut world = World::new(config, seed, Phase::Train, 1 + episode as u64, reserve)?;
        let mut total = 0.0;
        let mut months = 0;
        for _ in 0..config.train_months {
            if world.all_closed() {
                break;
            }
            total += world.step(pool, true, true)?.mean_reward;
            months += 1;
        }
        report.mean_reward_by_episode.push(if months == 0 {
            0.0
        } else {
            total / months as f64
        });
    }
    Ok(report)
}

/// Labels stamped onto evaluation output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLabel {
    pub config_hash: String,
    pub variant: String,
}

/// Result of one evaluation run.
pub struct Evaluation {
    pub bundle: MetricsBundle,
    pub months: Vec<MonthRecord>,
    pub digests: Vec<String>,
    pub world: World,
}

/// Evaluates frozen policies on the evaluation population under `shock`.
pub fn run_evaluation(
    config: &EngineConfig,
    seed: u64,
    pool: &mut LearnerPool,
    reserve: &Reserve,
    shock: &EvalShock,
    label: &RunLabel,
    keep_digests: bool,
) -> Result<Evaluation> {
    let mut world = World::new(config, seed, Phase::Evaluate, 0, reserve)?;
    world.eval_shock = Some(*shock);
    let population_hash = world.population_hash();
    let mut months = Vec::with_capacity(config.eval_months as usize);
    let mut digests = Vec::new();
    for _ in 0..config.eval_months {
        months.push(world.step(pool, false, false)?);
        if keep_digests {
            digests.push(world.state_digest());
        }
    }
    let mut actions = ActionCounts::default();
    for m in &months {
        let a = &m.actions;
        actions.pay_full += a.pay_full;
        actions.pay_savings += a.pay_savings;
        actions.miss += a.miss;
        actions.accept_relief += a.accept_relief;
        actions.decline_relief += a.decline_relief;
        actions.enroll += a.enroll;
        actions.decline_enroll += a.decline_enroll;
    }
    let meta = RunMeta {
        seed,
        config_hash: label.config_hash.clone(),
        variant: label.variant.clone(),
        shock_size: shock.relative_size,
        shock_month: shock.month,
        eval_months: config.eval_months,
        n_borrowers: world.borrowers.len(),
        population_hash,
    };
    let histories: Vec<BorrowerHistory> =
        world.borrowers.iter().map(|b| b.history.clone()).collect();
    let bundle = MetricsBundle::from_histories(
        meta,
        &histories,
        world.book.monthly.clone(),
        world.book.fee_income_by_quintile,
        actions,
    );
    Ok(Evaluation {
        bundle,
        months,
        digests,
        world,
    })
}
