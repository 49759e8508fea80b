//! Borrower decision making: observations, actions, the learner contract and a
//! tabular Q-learning baseline.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Money;
use crate::error::{Error, Result};
use crate::finance::{equity_component, liquidity_component, utility, EquityBasis, UtilityParams};
use crate::population::BorrowerProfile;
use crate::rng::SimRng;

/// Relief currently on the table for a borrower.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReliefOffer {
    #[default]
    None,
    Repayment,
    Forbearance,
    Modification,
}

impl ReliefOffer {
    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HpiBucket {
    Low,
    Par,
    High,
}

impl HpiBucket {
    pub fn of(h: f64) -> Self {
        if h < 0.95 {
            HpiBucket::Low
        } else if h > 1.05 {
            HpiBucket::High
        } else {
            HpiBucket::Par
        }
    }
}

/// Upper edges of the payment-to-income buckets; the last bucket runs to 2.0.
const PTI_EDGES: [f64; 6] = [0.15, 0.25, 0.35, 0.5, 0.75, 1.0];
/// Upper edges of the savings-in-months buckets; the last bucket runs to 12.
const SAVINGS_EDGES: [f64; 5] = [0.25, 1.0, 2.0, 3.0, 6.0];
const MAX_DELINQUENCY: u8 = 6;

const PTI_BUCKETS: usize = PTI_EDGES.len() + 1;
const SAVINGS_BUCKETS: usize = SAVINGS_EDGES.len() + 1;
const DELINQUENCY_BUCKETS: usize = MAX_DELINQUENCY as usize + 1;

/// Number of distinct observations.
pub const STATE_COUNT: usize = PTI_BUCKETS * SAVINGS_BUCKETS * DELINQUENCY_BUCKETS * 4 * 3 * 2;

fn bucket(value: f64, edges: &[f64]) -> u8 {
    edges.iter().take_while(|&&e| value >= e).count() as u8
}

/// Discretized view of a borrower's situation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub payment_to_income: u8,
    pub savings_months: u8,
    pub months_delinquent: u8,
    pub relief_offer: ReliefOffer,
    pub h_bucket: HpiBucket,
    pub mra_available: bool,
}

impl Observation {
    /// Dense index in `0..STATE_COUNT`.
    pub fn index(&self) -> usize {
        let mut i = self.payment_to_income as usize;
        i = i * SAVINGS_BUCKETS + self.savings_months as usize;
        i = i * DELINQUENCY_BUCKETS + self.months_delinquent as usize;
        i = i * 4 + self.relief_offer.index();
        i = i * 3 + self.h_bucket as usize;
        i * 2 + self.mra_available as usize
    }
}

/// Everything the encoder needs beyond the borrower profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationContext {
    /// Amount the borrower owes this month.
    pub payment_due: Money,
    pub relief_offer: ReliefOffer,
    pub h: f64,
    pub mra_available: bool,
    /// Unspent reserve-account balance, counted alongside savings.
    pub reserve_balance: Money,
}

/// Discretizes a borrower's state. Total over every reachable state.
///
/// | feature | buckets |
/// |---|---|
/// | payment due / income, clamped to [0, 2] | <0.15, <0.25, <0.35, <0.5, <0.75, <1, ≥1 |
/// | (savings + reserve balance) / (housing + nonhousing expenses), clamped to [0, 12] | <0.25, <1, <2, <3, <6, ≥6 |
/// | months delinquent | 0..=6 (6 means six or more) |
/// | relief offer | none, repayment, forbearance, modification |
/// | house price index | <0.95, [0.95, 1.05], >1.05 |
/// | reserve-account enrollment open | no, yes |
pub fn encode_observation(profile: &BorrowerProfile, ctx: &ObservationContext) -> Observation {
    let pti = if profile.monthly_income.is_positive() {
        ctx.payment_due
            .ratio(profile.monthly_income)
            .clamp(0.0, 2.0)
    } else {
        2.0
    };
    let expenses = profile.loan.scheduled_payment + profile.nonhousing_expense;
    let savings_months = if expenses.is_positive() {
        (profile.savings + ctx.reserve_balance)
            .ratio(expenses)
            .clamp(0.0, 12.0)
    } else {
        12.0
    };
    Observation {
        payment_to_income: bucket(pti, &PTI_EDGES),
        savings_months: bucket(savings_months, &SAVINGS_EDGES),
        months_delinquent: profile.loan.months_delinquent.min(MAX_DELINQUENCY as u32) as u8,
        relief_offer: ctx.relief_offer,
        h_bucket: HpiBucket::of(ctx.h),
        mra_available: ctx.mra_available,
    }
}

/// Per-step utility using current income and the contractual housing payment.
pub fn step_reward(profile: &BorrowerProfile, h: f64, basis: EquityBasis) -> f64 {
    let liquidity = liquidity_component(profile.loan.scheduled_payment, profile.monthly_income);
    let equity = equity_component(&profile.loan, basis);
    utility(
        UtilityParams {
            gamma: profile.gamma,
        },
        liquidity,
        equity,
        h,
    )
}

/// Largest reserve-account contribution menu the action space supports.
pub const MAX_MENU_SLOTS: usize = 8;
pub const ACTION_COUNT: usize = 6 + MAX_MENU_SLOTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// Pay the amount due out of this month's income.
    PayFull,
    /// Pay the amount due, drawing on savings because income falls short.
    PaySavings,
    Miss,
    AcceptRelief,
    DeclineRelief,
    DeclineMatchedMra,
    /// Contribute `amount`, the `slot`-th entry of the contribution menu.
    EnrollMatchedMra {
        slot: u8,
        amount: Money,
    },
}

impl Action {
    /// Fixed ordering used for table layout and greedy tie-breaks.
    pub fn index(&self) -> usize {
        match *self {
            Action::PayFull => 0,
            Action::PaySavings => 1,
            Action::Miss => 2,
            Action::AcceptRelief => 3,
            Action::DeclineRelief => 4,
            Action::DeclineMatchedMra => 5,
            Action::EnrollMatchedMra { slot, .. } => 6 + slot as usize,
        }
    }

    pub fn is_payment(&self) -> bool {
        matches!(self, Action::PayFull | Action::PaySavings)
    }
}

/// Snapshot of a learner's state, as bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LearnerSnapshot(pub Vec<u8>);

impl LearnerSnapshot {
    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.0).map_err(|e| Error::io(path, e))
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        std::fs::read(path)
            .map(LearnerSnapshot)
            .map_err(|e| Error::io(path, e))
    }
}

/// Contract every borrower learner satisfies.
pub trait PolicyLearner: Send + Sync {
    /// Picks one of `legal`, which must be non-empty. With `explore == false` the
    /// choice is a deterministic function of the learner state.
    fn act(
        &mut self,
        obs: &Observation,
        legal: &[Action],
        explore: bool,
        rng: &mut SimRng,
    ) -> Action;

    /// Records a transition. `next_legal` are the actions available in `next_obs`;
    /// both are ignored when `done`.
    fn learn(
        &mut self,
        obs: &Observation,
        action: Action,
        reward: f64,
        next_obs: &Observation,
        next_legal: &[Action],
        done: bool,
    );

    fn snapshot(&self) -> LearnerSnapshot;

    fn restore(&mut self, snapshot: &LearnerSnapshot) -> Result<()>;
}

/// Exploration probability decays linearly from `start` to `end` over
/// `decay_steps` exploring decisions, then stays at `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        EpsilonSchedule {
            start: epsilon,
            end: epsilon,
            decay_steps: 0,
        }
    }

    pub fn at(&self, step: u64) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        let t = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerParams {
    /// Learning-rate floor. Each table entry starts with a sample-average step of
    /// `1 / visits` and never goes below this.
    pub alpha: f64,
    pub epsilon: EpsilonSchedule,
    pub discount: f64,
    /// Greedy choice takes the lowest-index visited action within this much of
    /// the best value.
    pub tie_tolerance: f64,
}

impl Default for LearnerParams {
    fn default() -> Self {
        LearnerParams {
            alpha: 0.01,
            epsilon: EpsilonSchedule {
                start: 0.3,
                end: 0.02,
                decay_steps: 500_000,
            },
            discount: 0.95,
            tie_tolerance: 0.1,
        }
    }
}

impl LearnerParams {
    pub fn validate(&self, out: &mut Vec<String>) {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            out.push(format!(
                "learner.alpha must be in (0, 1], got {}",
                self.alpha
            ));
        }
        if !(0.0..1.0).contains(&self.discount) {
            out.push(format!(
                "learner.discount must be in [0, 1), got {}",
                self.discount
            ));
        }
        if !(self.tie_tolerance >= 0.0 && self.tie_tolerance.is_finite()) {
            out.push(format!(
                "learner.tie_tolerance must be >= 0, got {}",
                self.tie_tolerance
            ));
        }
        let e = &self.epsilon;
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.end) {
            out.push(format!(
                "learner.epsilon start/end must be in [0, 1], got {}/{}",
                e.start, e.end
            ));
        }
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"MSQL";
const SNAPSHOT_VERSION: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
struct Row {
    q: [f64; ACTION_COUNT],
    visits: [u32; ACTION_COUNT],
}

impl Default for Row {
    fn default() -> Self {
        Row {
            q: [0.0; ACTION_COUNT],
            visits: [0; ACTION_COUNT],
        }
    }
}

/// Q-learning over the observation × action table. Rows are created on first
/// visit; unvisited entries read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQLearner {
    params: LearnerParams,
    rows: BTreeMap<usize, Row>,
    explore_steps: u64,
}

impl TabularQLearner {
    pub fn new(params: LearnerParams) -> Result<Self> {
        let mut problems = Vec::new();
        params.validate(&mut problems);
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(TabularQLearner {
            params,
            rows: BTreeMap::new(),
            explore_steps: 0,
        })
    }

    pub fn params(&self) -> &LearnerParams {
        &self.params
    }

    pub fn q_value(&self, obs: &Observation, action: Action) -> f64 {
        self.rows
            .get(&obs.index())
            .map_or(0.0, |r| r.q[action.index()])
    }

    pub fn visit_count(&self, obs: &Observation, action: Action) -> u32 {
        self.rows
            .get(&obs.index())
            .map_or(0, |r| r.visits[action.index()])
    }

    pub fn current_epsilon(&self) -> f64 {
        self.params.epsilon.at(self.explore_steps)
    }

    /// Best visited legal action and its value. Unvisited actions are only
    /// chosen when nothing legal has been tried; ties go to the lowest index.
    fn best(&self, obs: &Observation, legal: &[Action]) -> (Action, f64) {
        let Some(row) = self.rows.get(&obs.index()) else {
            return (
                *legal.iter().min_by_key(|a| a.index()).expect("non-empty"),
                0.0,
            );
        };
        let mut best: Option<(Action, f64)> = None;
        for &a in legal {
            let i = a.index();
            if row.visits[i] == 0 {
                continue;
            }
            let v = row.q[i];
            match best {
                Some((b, bv)) if v < bv || (v == bv && i > b.index()) => {}
                _ => best = Some((a, v)),
            }
        }
        best.unwrap_or_else(|| {
            (
                *legal.iter().min_by_key(|a| a.index()).expect("non-empty"),
                0.0,
            )
        })
    }

    fn greedy(&self, obs: &Observation, legal: &[Action]) -> Action {
        let (best, value) = self.best(obs, legal);
        let tol = self.params.tie_tolerance;
        let Some(row) = self.rows.get(&obs.index()) else {
            return best;
        };
        legal
            .iter()
            .copied()
            .filter(|a| row.visits[a.index()] > 0 && row.q[a.index()] >= value - tol)
            .min_by_key(|a| a.index())
            .unwrap_or(best)
    }

    fn max_q(&self, obs: &Observation, legal: &[Action]) -> f64 {
        self.best(obs, legal).1
    }
}

impl PolicyLearner for TabularQLearner {
    fn act(
        &mut self,
        obs: &Observation,
        legal: &[Action],
        explore: bool,
        rng: &mut SimRng,
    ) -> Action {
        assert!(!legal.is_empty(), "act called with no legal actions");
        if explore {
            let eps = self.current_epsilon();
            self.explore_steps += 1;
            if legal.len() > 1 && rng.random::<f64>() < eps {
                return *legal.choose(rng).expect("non-empty");
            }
        }
        self.greedy(obs, legal)
    }

    fn learn(
        &mut self,
        obs: &Observation,
        action: Action,
        reward: f64,
        next_obs: &Observation,
        next_legal: &[Action],
        done: bool,
    ) {
        let bootstrap = if done || next_legal.is_empty() {
            0.0
        } else {
            self.max_q(next_obs, next_legal)
        };
        let target = reward + self.params.discount * bootstrap;
        let row = self.rows.entry(obs.index()).or_default();
        let a = action.index();
        row.visits[a] = row.visits[a].saturating_add(1);
        let step = (1.0 / row.visits[a] as f64).max(self.params.alpha);
        row.q[a] += step * (target - row.q[a]);
    }

    fn snapshot(&self) -> LearnerSnapshot {
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&(STATE_COUNT as u32).to_le_bytes());
        out.extend_from_slice(&(ACTION_COUNT as u32).to_le_bytes());
        out.extend_from_slice(&self.params.alpha.to_le_bytes());
        out.extend_from_slice(&self.params.discount.to_le_bytes());
        out.extend_from_slice(&self.params.tie_tolerance.to_le_bytes());
        out.extend_from_slice(&self.params.epsilon.start.to_le_bytes());
        out.extend_from_slice(&self.params.epsilon.end.to_le_bytes());
        out.extend_from_slice(&self.params.epsilon.decay_steps.to_le_bytes());
        out.extend_from_slice(&self.explore_steps.to_le_bytes());
        let touched: Vec<(usize, f64, u32)> = self
            .rows
            .iter()
            .flat_map(|(&s, r)| {
                (0..ACTION_COUNT)
                    .filter(|&a| r.visits[a] > 0)
                    .map(move |a| (s * ACTION_COUNT + a, r.q[a], r.visits[a]))
            })
            .collect();
        out.extend_from_slice(&(touched.len() as u32).to_le_bytes());
        for (k, q, visits) in touched {
            out.extend_from_slice(&(k as u32).to_le_bytes());
            out.extend_from_slice(&q.to_le_bytes());
            out.extend_from_slice(&visits.to_le_bytes());
        }
        LearnerSnapshot(out)
    }

    fn restore(&mut self, snapshot: &LearnerSnapshot) -> Result<()> {
        let mut r = ByteReader {
            bytes: &snapshot.0,
            at: 0,
        };
        if r.take(4)? != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("not a tabular learner snapshot".into()));
        }
        let version = r.u32()?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported snapshot version {version}"
            )));
        }
        let (states, actions) = (r.u32()? as usize, r.u32()? as usize);
        if states != STATE_COUNT || actions != ACTION_COUNT {
            return Err(Error::Snapshot(format!(
                "table shape {states}x{actions} does not match {STATE_COUNT}x{ACTION_COUNT}"
            )));
        }
        let params = LearnerParams {
            alpha: r.f64()?,
            discount: r.f64()?,
            tie_tolerance: r.f64()?,
            epsilon: EpsilonSchedule {
                start: r.f64()?,
                end: r.f64()?,
                decay_steps: r.u64()?,
            },
        };
        let explore_steps = r.u64()?;
        let count = r.u32()? as usize;
        let mut rows: BTreeMap<usize, Row> = BTreeMap::new();
        for _ in 0..count {
            let k = r.u32()? as usize;
            if k >= STATE_COUNT * ACTION_COUNT {
                return Err(Error::Snapshot(format!("entry index {k} out of range")));
            }
            let row = rows.entry(k / ACTION_COUNT).or_default();
            row.q[k % ACTION_COUNT] = r.f64()?;
            row.visits[k % ACTION_COUNT] = r.u32()?;
        }
        if r.at != snapshot.0.len() {
            return Err(Error::Snapshot("trailing bytes after table".into()));
        }
        *self = TabularQLearner {
            params,
            rows,
            explore_steps,
        };
        Ok(())
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at + n;
        let slice = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| Error::Snapshot("truncated snapshot".into()))?;
        self.at = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

/// Builds a tabular learner behind the [`PolicyLearner`] contract.
pub fn tabular_learner(params: LearnerParams) -> Result<Box<dyn PolicyLearner>> {
    Ok(Box::new(TabularQLearner::new(params)?))
}
