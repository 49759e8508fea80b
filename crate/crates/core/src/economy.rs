//! Exogenous economy: income shocks and the house price index.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::Money;
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum HpiPath {
    #[default]
    Constant,
    /// Multiplicative drift per month.
    Drift { monthly: f64 },
    /// Log-normal monthly steps with the given drift and volatility.
    GeometricWalk { drift: f64, volatility: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockSigns {
    #[default]
    Both,
    IncreaseOnly,
    ReduceOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockDirection {
    Increase,
    Reduce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShockMode {
    TrainRandom,
    EvalDeterministic,
}

/// The single deterministic shock applied during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalShock {
    pub month: u32,
    pub relative_size: f64,
    pub direction: ShockDirection,
    pub coverage: f64,
}

impl Default for EvalShock {
    fn default() -> Self {
        EvalShock {
            month: 0,
            relative_size: 0.0,
            direction: ShockDirection::Reduce,
            coverage: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShockProcess {
    pub train_monthly_arrival_prob: f64,
    pub train_magnitude_range: [f64; 2],
    pub train_signs: ShockSigns,
    /// Months a training shock lasts before income reverts; `None` means permanent.
    pub shock_duration_months: Option<u32>,
}

impl Default for ShockProcess {
    fn default() -> Self {
        ShockProcess {
            train_monthly_arrival_prob: 1.0 / 12.0,
            train_magnitude_range: [0.1, 0.5],
            train_signs: ShockSigns::Both,
            shock_duration_months: None,
        }
    }
}

impl ShockProcess {
    pub fn validate(&self, out: &mut Vec<String>) {
        let p = self.train_monthly_arrival_prob;
        if !(0.0..=1.0).contains(&p) {
            out.push(format!(
                "economy.shocks.train_monthly_arrival_prob must be in [0, 1], got {p}"
            ));
        }
        let [lo, hi] = self.train_magnitude_range;
        if !(lo >= 0.0 && lo <= hi) {
            out.push(format!(
                "economy.shocks.train_magnitude_range must satisfy 0 <= lo <= hi, got [{lo}, {hi}]"
            ));
        }
        if self.train_signs != ShockSigns::IncreaseOnly && hi > 1.0 {
            out.push(format!(
                "economy.shocks.train_magnitude_range upper bound {hi} would make income negative"
            ));
        }
        if self.shock_duration_months == Some(0) {
            out.push("economy.shocks.shock_duration_months must be at least 1 (omit it for permanent shocks)".into());
        }
    }
}

impl EvalShock {
    pub fn validate(&self, out: &mut Vec<String>) {
        if !(0.0..=1.0).contains(&self.coverage) {
            out.push(format!(
                "evaluation shock coverage must be in [0, 1], got {}",
                self.coverage
            ));
        }
        let ok = match self.direction {
            ShockDirection::Reduce => (0.0..=1.0).contains(&self.relative_size),
            ShockDirection::Increase => self.relative_size >= 0.0 && self.relative_size.is_finite(),
        };
        if !ok {
            out.push(format!(
                "evaluation shock size {} is out of range for {:?}",
                self.relative_size, self.direction
            ));
        }
    }
}

/// One borrower's income change this month, as a signed fraction of income.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncomeShock {
    pub borrower: usize,
    pub change: f64,
}

impl IncomeShock {
    pub fn factor(&self) -> f64 {
        1.0 + self.change
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EconomyState {
    pub h: f64,
    pub hpi_path: HpiPath,
    pub shocks: ShockProcess,
    pub mode: ShockMode,
}

impl EconomyState {
    pub fn new(hpi_path: HpiPath, shocks: ShockProcess, mode: ShockMode) -> Self {
        EconomyState {
            h: 1.0,
            hpi_path,
            shocks,
            mode,
        }
    }
}

/// Advances the house price index by one month.
pub fn step_hpi(state: &mut EconomyState, rng: &mut SimRng) {
    let next = match state.hpi_path {
        HpiPath::Constant => state.h,
        HpiPath::Drift { monthly } => state.h * (1.0 + monthly),
        HpiPath::GeometricWalk { drift, volatility } => {
            let z: f64 = StandardNormal.sample(rng);
            state.h * (drift + volatility * z).exp()
        }
    };
    // the index stays strictly positive
    state.h = next.max(f64::MIN_POSITIVE);
}

pub fn validate_hpi(path: &HpiPath, out: &mut Vec<String>) {
    match *path {
        HpiPath::Constant => {}
        HpiPath::Drift { monthly } => {
            if !(monthly > -1.0 && monthly.is_finite()) {
                out.push(format!("economy.hpi drift {monthly} must exceed -1"));
            }
        }
        HpiPath::GeometricWalk { drift, volatility } => {
            if !(drift.is_finite() && volatility.is_finite() && volatility >= 0.0) {
                out.push(format!("economy.hpi geometric walk needs finite drift and volatility >= 0, got ({drift}, {volatility})"));
            }
        }
    }
}

/// Draws this month's training shocks: an independent Bernoulli arrival per
/// borrower, a uniform magnitude, and a uniform sign among the allowed ones.
pub fn sample_train_shocks(
    process: &ShockProcess,
    borrower_count: usize,
    rng: &mut SimRng,
) -> Vec<IncomeShock> {
    let p = process.train_monthly_arrival_prob;
    let mut out = Vec::new();
    if p <= 0.0 {
        return out;
    }
    let [lo, hi] = process.train_magnitude_range;
    for borrower in 0..borrower_count {
        if rng.random::<f64>() >= p {
            continue;
        }
        let magnitude = if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        };
        let reduce = match process.train_signs {
            ShockSigns::Both => rng.random::<bool>(),
            ShockSigns::ReduceOnly => true,
            ShockSigns::IncreaseOnly => false,
        };
        out.push(IncomeShock {
            borrower,
            change: if reduce { -magnitude } else { magnitude },
        });
    }
    out
}

/// Scales an income by a shock factor, never below zero.
pub fn shocked_income(income: Money, factor: f64) -> Money {
    income.scale(factor.max(0.0)).clamp_non_negative()
}

/// Applies the evaluation shock to a seeded sample of `coverage × n` incomes.
///
/// Returns the indices that were shocked, in ascending order.
pub fn apply_eval_shock(
    incomes: &mut [Money],
    shock: &EvalShock,
    rng: &mut SimRng,
) -> Result<Vec<usize>> {
    let mut problems = Vec::new();
    shock.validate(&mut problems);
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let n = incomes.len();
    let count = ((shock.coverage * n as f64).round() as usize).min(n);
    let mut chosen: Vec<usize> = if count == n {
        (0..n).collect()
    } else {
        index::sample(rng, n, count).into_vec()
    };
    chosen.sort_unstable();
    let factor = match shock.direction {
        ShockDirection::Reduce => 1.0 - shock.relative_size,
        ShockDirection::Increase => 1.0 + shock.relative_size,
    };
    for &i in &chosen {
        incomes[i] = shocked_income(incomes[i], factor);
    }
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    fn rng(seed: u64) -> SimRng {
        substream(seed, Stream::Economy, 0)
    }

    #[test]
    fn constant_and_drift_paths() {
        let mut s = EconomyState::new(
            HpiPath::Constant,
            ShockProcess::default(),
            ShockMode::EvalDeterministic,
        );
        step_hpi(&mut s, &mut rng(1));
        assert_eq!(s.h, 1.0);
        s.hpi_path = HpiPath::Drift { monthly: 0.002 };
        step_hpi(&mut s, &mut rng(1));
        assert!((s.h - 1.002).abs() < 1e-15);
    }

    #[test]
    fn geometric_walk_replays_and_stays_positive() {
        let path = |seed| {
            let mut s = EconomyState::new(
                HpiPath::GeometricWalk {
                    drift: -0.01,
                    volatility: 0.2,
                },
                ShockProcess::default(),
                ShockMode::TrainRandom,
            );
            let mut r = substream(seed, Stream::Hpi, 0);
            (0..240)
                .map(|_| {
                    step_hpi(&mut s, &mut r);
                    s.h
                })
                .collect::<Vec<_>>()
        };
        let a = path(9);
        assert_eq!(a, path(9));
        assert_ne!(a, path(10));
        assert!(a.iter().all(|&h| h > 0.0));
    }

    #[test]
    fn train_arrivals_average_once_per_year() {
        // 10,000 borrower-years at p = 1/12. Binomial(120_000, 1/12) has mean 10,000
        // and standard deviation ~95.7 arrivals, i.e. ~0.0096 per borrower-year, so
        // the ±0.05 band sits at more than five standard deviations.
        let process = ShockProcess::default();
        let mut r = rng(42);
        let borrowers = 1000;
        let mut arrivals = 0usize;
        for _month in 0..120 {
            arrivals += sample_train_shocks(&process, borrowers, &mut r).len();
        }
        let per_year = arrivals as f64 / (borrowers as f64 * 10.0);
        assert!((per_year - 1.0).abs() < 0.05, "{per_year}");
    }

    #[test]
    fn train_shocks_respect_range_and_signs() {
        let process = ShockProcess {
            train_monthly_arrival_prob: 0.5,
            train_magnitude_range: [0.1, 0.3],
            train_signs: ShockSigns::ReduceOnly,
            ..ShockProcess::default()
        };
        let shocks = sample_train_shocks(&process, 500, &mut rng(3));
        assert!(!shocks.is_empty());
        assert!(shocks.iter().all(|s| (-0.3..=-0.1).contains(&s.change)));
        let both = ShockProcess {
            train_signs: ShockSigns::Both,
            ..process.clone()
        };
        let shocks = sample_train_shocks(&both, 2000, &mut rng(3));
        let ups = shocks.iter().filter(|s| s.change > 0.0).count();
        assert!(ups > 0 && ups < shocks.len());
    }

    #[test]
    fn zero_probability_gives_no_shocks() {
        let process = ShockProcess {
            train_monthly_arrival_prob: 0.0,
            ..ShockProcess::default()
        };
        assert!(sample_train_shocks(&process, 10_000, &mut rng(1)).is_empty());
    }

    #[test]
    fn train_shocks_are_deterministic() {
        let p = ShockProcess::default();
        assert_eq!(
            sample_train_shocks(&p, 1000, &mut rng(5)),
            sample_train_shocks(&p, 1000, &mut rng(5))
        );
    }

    #[test]
    fn eval_shock_scales_income() {
        let shock = EvalShock {
            month: 0,
            relative_size: 0.2,
            direction: ShockDirection::Reduce,
            coverage: 1.0,
        };
        let mut incomes = vec![Money::dollars(5000)];
        apply_eval_shock(&mut incomes, &shock, &mut rng(1)).unwrap();
        assert_eq!(incomes[0], Money::dollars(4000));

        let none = EvalShock {
            relative_size: 0.0,
            ..shock
        };
        let mut incomes = vec![Money::dollars(5000), Money::from_cents(123_457)];
        apply_eval_shock(&mut incomes, &none, &mut rng(1)).unwrap();
        assert_eq!(
            incomes,
            vec![Money::dollars(5000), Money::from_cents(123_457)]
        );

        let full = EvalShock {
            relative_size: 1.0,
            ..shock
        };
        let mut incomes = vec![Money::dollars(5000)];
        apply_eval_shock(&mut incomes, &full, &mut rng(1)).unwrap();
        assert_eq!(incomes[0], Money::ZERO);
    }

    #[test]
    fn partial_coverage_is_exact_and_replayable() {
        let shock = EvalShock {
            month: 0,
            relative_size: 0.3,
            direction: ShockDirection::Reduce,
            coverage: 0.5,
        };
        let run = || {
            let mut incomes = vec![Money::dollars(1000); 1000];
            let chosen = apply_eval_shock(&mut incomes, &shock, &mut rng(77)).unwrap();
            (chosen, incomes)
        };
        let (a, incomes) = run();
        assert_eq!(a.len(), 500);
        assert_eq!(
            incomes
                .iter()
                .filter(|&&m| m == Money::dollars(700))
                .count(),
            500
        );
        assert_eq!(a, run().0);
    }

    #[test]
    fn invalid_coverage_is_a_config_error() {
        let shock = EvalShock {
            month: 0,
            relative_size: 0.3,
            direction: ShockDirection::Reduce,
            coverage: 1.5,
        };
        let mut incomes = vec![Money::dollars(1000)];
        assert!(matches!(
            apply_eval_shock(&mut incomes, &shock, &mut rng(1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn shocks_never_make_income_negative() {
        assert_eq!(shocked_income(Money::dollars(100), -0.5), Money::ZERO);
        assert_eq!(shocked_income(Money::dollars(100), 0.0), Money::ZERO);
    }

    #[test]
    fn disabled_economy_is_identity() {
        let process = ShockProcess {
            train_monthly_arrival_prob: 0.0,
            ..ShockProcess::default()
        };
        let mut s = EconomyState::new(HpiPath::Constant, process, ShockMode::TrainRandom);
        let before = s.clone();
        let mut r = rng(1);
        for _ in 0..24 {
            step_hpi(&mut s, &mut r);
            assert!(sample_train_shocks(&s.shocks, 100, &mut r).is_empty());
        }
        assert_eq!(s, before);
    }

    #[test]
    fn validation_flags_bad_processes() {
        let mut v = Vec::new();
        ShockProcess {
            train_monthly_arrival_prob: 1.5,
            ..ShockProcess::default()
        }
        .validate(&mut v);
        ShockProcess {
            train_magnitude_range: [0.5, 0.1],
            ..ShockProcess::default()
        }
        .validate(&mut v);
        ShockProcess {
            train_magnitude_range: [0.5, 1.5],
            ..ShockProcess::default()
        }
        .validate(&mut v);
        assert_eq!(v.len(), 3);
        let mut v = Vec::new();
        ShockProcess::default().validate(&mut v);
        assert!(v.is_empty());
    }
}
