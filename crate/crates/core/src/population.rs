//! Synthetic borrower population drawn from a distribution config.
//!
//! Income is drawn first from an empirical quantile table. Every other
//! attribute is drawn from the table for the income's quintile bucket, and the
//! mortgage is back-solved so its level payment matches the drawn
//! payment-to-income ratio.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{assign_quintiles, BorrowerId, IncomeQuintile, Money, Rate};
use crate::error::{Error, Result};
use crate::finance::{principal_for_payment, Loan};
use crate::rng::SimRng;

pub const SCHEMA_VERSION: u32 = 1;

const DEFAULT_CONFIG: &str = include_str!("../data/default_population.toml");

/// Piecewise-linear inverse CDF given as `[probability, value]` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuantileTable(pub Vec<[f64; 2]>);

impl QuantileTable {
    /// Value at cumulative probability `u ∈ [0, 1]`.
    pub fn value_at(&self, u: f64) -> f64 {
        let pts = &self.0;
        let u = u.clamp(0.0, 1.0);
        let k = pts.partition_point(|p| p[0] <= u);
        if k == 0 {
            return pts[0][1];
        }
        if k == pts.len() {
            return pts[k - 1][1];
        }
        let ([p0, v0], [p1, v1]) = (pts[k - 1], pts[k]);
        v0 + (v1 - v0) * (u - p0) / (p1 - p0)
    }

    /// CDF of the interpolated distribution at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        let pts = &self.0;
        if x <= pts[0][1] {
            return 0.0;
        }
        let last = pts[pts.len() - 1];
        if x >= last[1] {
            return 1.0;
        }
        let k = pts.partition_point(|p| p[1] <= x);
        let ([p0, v0], [p1, v1]) = (pts[k - 1], pts[k]);
        p0 + (p1 - p0) * (x - v0) / (v1 - v0)
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        self.value_at(rng.random::<f64>())
    }

    /// Mean of the interpolated distribution (trapezoid per segment).
    pub fn mean(&self) -> f64 {
        self.0
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]) * 0.5 * (w[0][1] + w[1][1]))
            .sum()
    }

    fn validate(&self, name: &str, bounds: Option<(f64, f64)>, out: &mut Vec<String>) {
        let pts = &self.0;
        if pts.len() < 2 {
            out.push(format!("{name}: needs at least two points"));
            return;
        }
        if pts.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            out.push(format!("{name}: contains non-finite values"));
            return;
        }
        if pts[0][0] != 0.0 || pts[pts.len() - 1][0] != 1.0 {
            out.push(format!(
                "{name}: probabilities must start at 0 and end at 1"
            ));
        }
        if pts.windows(2).any(|w| w[1][0] <= w[0][0]) {
            out.push(format!("{name}: probabilities are not strictly increasing"));
        }
        if pts.windows(2).any(|w| w[1][1] <= w[0][1]) {
            out.push(format!("{name}: values are not strictly increasing"));
        }
        if let Some((lo, hi)) = bounds {
            if pts.iter().any(|p| p[1] < lo || p[1] > hi) {
                out.push(format!("{name}: values must lie in [{lo}, {hi}]"));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerQuintile<T> {
    pub q1: T,
    pub q2: T,
    pub q3: T,
    pub q4: T,
    pub q5: T,
}

impl<T> PerQuintile<T> {
    pub fn get(&self, q: IncomeQuintile) -> &T {
        self.by_slot(q.slot())
    }

    fn by_slot(&self, slot: usize) -> &T {
        match slot {
            0 => &self.q1,
            1 => &self.q2,
            2 => &self.q3,
            3 => &self.q4,
            _ => &self.q5,
        }
    }

    fn iter(&self) -> impl Iterator<Item = (usize, &T)> {
        (0..5).map(move |s| (s + 1, self.by_slot(s)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GammaDist {
    /// Beta(alpha, beta) with integer shapes, drawn as the `alpha`-th order
    /// statistic of `alpha + beta - 1` uniforms.
    Beta {
        alpha: u32,
        beta: u32,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Fixed {
        value: f64,
    },
}

impl GammaDist {
    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        match *self {
            GammaDist::Beta { alpha, beta } => {
                let mut draws: Vec<f64> =
                    (0..alpha + beta - 1).map(|_| rng.random::<f64>()).collect();
                draws.sort_by(f64::total_cmp);
                draws[alpha as usize - 1]
            }
            GammaDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            GammaDist::Fixed { value } => value,
        }
    }

    fn validate(&self, out: &mut Vec<String>) {
        match *self {
            GammaDist::Beta { alpha, beta } => {
                if alpha == 0 || beta == 0 || alpha + beta > 64 {
                    out.push(format!("gamma: beta shapes must be positive integers with alpha + beta <= 64, got ({alpha}, {beta})"));
                }
            }
            GammaDist::Uniform { lo, hi } => {
                if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                    out.push(format!(
                        "gamma: uniform bounds must satisfy 0 <= lo <= hi <= 1, got [{lo}, {hi}]"
                    ));
                }
            }
            GammaDist::Fixed { value } => {
                if !(0.0..=1.0).contains(&value) {
                    out.push(format!("gamma: fixed value must be in [0, 1], got {value}"));
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermChoice {
    pub months: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoanParams {
    pub annual_rate: QuantileTable,
    pub terms: Vec<TermChoice>,
    pub max_age_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncomeTable {
    pub quantiles: QuantileTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub min_initial_surplus_ratio: f64,
    pub income: IncomeTable,
    pub housing_ratio: PerQuintile<QuantileTable>,
    pub nonhousing_ratio: PerQuintile<QuantileTable>,
    pub savings: PerQuintile<QuantileTable>,
    pub gamma: GammaDist,
    pub loan: LoanParams,
}

impl Default for DistributionConfig {
    fn default() -> Self {
        toml::from_str(DEFAULT_CONFIG).expect("bundled population config parses")
    }
}

impl DistributionConfig {
    pub fn default_toml() -> &'static str {
        DEFAULT_CONFIG
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message,
        })
    }
}

/// Lists every invariant the config violates; empty when the config is usable.
pub fn validate_config(config: &DistributionConfig) -> Vec<String> {
    let mut out = Vec::new();
    if config.schema_version != SCHEMA_VERSION {
        out.push(format!(
            "schema_version: expected {SCHEMA_VERSION}, got {}",
            config.schema_version
        ));
    }
    if !(0.0..1.0).contains(&config.min_initial_surplus_ratio) {
        out.push(format!(
            "min_initial_surplus_ratio: must be in [0, 1), got {}",
            config.min_initial_surplus_ratio
        ));
    }
    config
        .income
        .quantiles
        .validate("income.quantiles", Some((0.0, f64::MAX)), &mut out);
    for (q, table) in config.housing_ratio.iter() {
        table.validate(&format!("housing_ratio.q{q}"), Some((0.0, 1.5)), &mut out);
        if table.0.first().is_some_and(|p| p[1] <= 0.0) {
            out.push(format!(
                "housing_ratio.q{q}: ratios must be positive (every borrower holds a loan)"
            ));
        }
    }
    for (q, table) in config.nonhousing_ratio.iter() {
        table.validate(
            &format!("nonhousing_ratio.q{q}"),
            Some((0.0, 1.5)),
            &mut out,
        );
    }
    for (q, table) in config.savings.iter() {
        table.validate(&format!("savings.q{q}"), Some((0.0, f64::MAX)), &mut out);
    }
    config.gamma.validate(&mut out);
    config
        .loan
        .annual_rate
        .validate("loan.annual_rate", Some((0.0, 1.0)), &mut out);
    if config.loan.terms.is_empty() {
        out.push("loan.terms: at least one term is required".into());
    }
    for t in &config.loan.terms {
        if t.months < 2 || !(t.weight > 0.0 && t.weight.is_finite()) {
            out.push(format!(
                "loan.terms: term {} months with weight {} is invalid",
                t.months, t.weight
            ));
        }
    }
    if !(0.0..1.0).contains(&config.loan.max_age_fraction) {
        out.push(format!(
            "loan.max_age_fraction: must be in [0, 1), got {}",
            config.loan.max_age_fraction
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorrowerProfile {
    pub id: BorrowerId,
    pub monthly_income: Money,
    pub housing_expense: Money,
    pub nonhousing_expense: Money,
    pub savings: Money,
    pub gamma: f64,
    pub quintile: IncomeQuintile,
    pub loan: Loan,
}

fn pick_term(terms: &[TermChoice], rng: &mut SimRng) -> u32 {
    let total: f64 = terms.iter().map(|t| t.weight).sum();
    let mut u = rng.random::<f64>() * total;
    for t in terms {
        if u < t.weight {
            return t.months;
        }
        u -= t.weight;
    }
    terms[terms.len() - 1].months
}

/// Draws `n` borrowers. Pure function of `(config, n, rng state)`.
pub fn sample_population(
    config: &DistributionConfig,
    n: usize,
    rng: &mut SimRng,
) -> Result<Vec<BorrowerProfile>> {
    let problems = validate_config(config);
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    if n < 5 {
        return Err(Error::Config(format!(
            "population needs at least 5 borrowers, got {n}"
        )));
    }

    let mut drafts = Vec::with_capacity(n);
    for i in 0..n {
        let u = rng.random::<f64>();
        let income = Money::from_f64_dollars(config.income.quantiles.value_at(u));
        let bucket = IncomeQuintile::ALL[((u * 5.0) as usize).min(4)];

        let housing_ratio = config.housing_ratio.get(bucket).sample(rng);
        let mut nonhousing_ratio = config.nonhousing_ratio.get(bucket).sample(rng);
        nonhousing_ratio = nonhousing_ratio
            .min(1.0 - housing_ratio - config.min_initial_surplus_ratio)
            .max(0.0);
        let savings =
            Money::from_f64_dollars(config.savings.get(bucket).sample(rng)).clamp_non_negative();
        let gamma = config.gamma.sample(rng);
        let annual_rate = Rate::new(config.loan.annual_rate.sample(rng))?;
        let term = pick_term(&config.loan.terms, rng);
        let max_age = (config.loan.max_age_fraction * term as f64).floor() as u32;
        let age = rng.random_range(0..=max_age.min(term - 1));

        let target_payment = income.scale(housing_ratio).max(Money::from_cents(1));
        let principal =
            principal_for_payment(target_payment, annual_rate, term).max(Money::from_cents(1));
        let loan = Loan::seasoned(principal, annual_rate, term, age)?;

        drafts.push(BorrowerProfile {
            id: BorrowerId(i as u32),
            monthly_income: income,
            housing_expense: loan.scheduled_payment,
            nonhousing_expense: income.scale(nonhousing_ratio),
            savings,
            gamma,
            quintile: bucket,
            loan,
        });
    }

    let incomes: Vec<Money> = drafts.iter().map(|b| b.monthly_income).collect();
    for (b, q) in drafts.iter_mut().zip(assign_quintiles(&incomes)) {
        b.quintile = q;
    }
    Ok(drafts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    fn rng(seed: u64) -> SimRng {
        substream(seed, Stream::Population, 0)
    }

    #[test]
    fn default_config_is_valid() {
        assert_eq!(
            validate_config(&DistributionConfig::default()),
            Vec::<String>::new()
        );
    }

    #[test]
    fn non_monotone_table_is_named() {
        let mut c = DistributionConfig::default();
        c.income.quantiles.0[3][1] = 100.0;
        let v = validate_config(&c);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].starts_with("income.quantiles"));
    }

    #[test]
    fn negative_savings_is_flagged() {
        let mut c = DistributionConfig::default();
        c.savings.q2.0[0][1] = -50.0;
        let v = validate_config(&c);
        assert!(v.iter().any(|m| m.starts_with("savings.q2")), "{v:?}");
    }

    #[test]
    fn out_of_range_ratio_is_flagged() {
        let mut c = DistributionConfig::default();
        c.nonhousing_ratio.q4.0[2][1] = 1.8;
        assert!(validate_config(&c)
            .iter()
            .any(|m| m.starts_with("nonhousing_ratio.q4")));
    }

    #[test]
    fn malformed_config_is_rejected_by_sampling() {
        let c = DistributionConfig {
            schema_version: 9,
            ..DistributionConfig::default()
        };
        assert!(matches!(
            sample_population(&c, 100, &mut rng(1)),
            Err(Error::Validation(_))
        ));
        assert!(sample_population(&DistributionConfig::default(), 4, &mut rng(1)).is_err());
    }

    #[test]
    fn quantile_table_interpolates() {
        let t = QuantileTable(vec![[0.0, 10.0], [0.5, 20.0], [1.0, 40.0]]);
        assert_eq!(t.value_at(0.0), 10.0);
        assert_eq!(t.value_at(0.25), 15.0);
        assert_eq!(t.value_at(0.75), 30.0);
        assert_eq!(t.value_at(1.0), 40.0);
        assert_eq!(t.cdf(15.0), 0.25);
        assert_eq!(t.cdf(5.0), 0.0);
        assert_eq!(t.cdf(50.0), 1.0);
        assert!((t.mean() - 22.5).abs() < 1e-12);
    }

    #[test]
    fn quintiles_have_equal_sizes() {
        let pop = sample_population(&DistributionConfig::default(), 1000, &mut rng(3)).unwrap();
        let mut sizes = [0; 5];
        for b in &pop {
            sizes[b.quintile.slot()] += 1;
        }
        assert_eq!(sizes, [200; 5]);
    }

    #[test]
    fn low_income_quintile_spends_more_on_housing() {
        let c = DistributionConfig::default();
        // the config's own bucket means set the expected direction
        assert!(c.housing_ratio.q1.mean() > c.housing_ratio.q5.mean());
        let pop = sample_population(&c, 1000, &mut rng(5)).unwrap();
        let mean_ratio = |q: u8| {
            let xs: Vec<f64> = pop
                .iter()
                .filter(|b| b.quintile.index() == q)
                .map(|b| b.housing_expense.ratio(b.monthly_income))
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        assert!(mean_ratio(1) > mean_ratio(5));
    }

    #[test]
    fn same_seed_same_population() {
        let c = DistributionConfig::default();
        assert_eq!(
            sample_population(&c, 300, &mut rng(11)).unwrap(),
            sample_population(&c, 300, &mut rng(11)).unwrap()
        );
    }

    #[test]
    fn profile_invariants_hold() {
        let pop = sample_population(&DistributionConfig::default(), 2000, &mut rng(8)).unwrap();
        for b in &pop {
            assert_eq!(b.housing_expense, b.loan.scheduled_payment);
            assert!(!b.savings.is_negative());
            assert!((0.0..=1.0).contains(&b.gamma));
            assert!(b.loan.remaining_months > 0);
            assert!(b.housing_expense + b.nonhousing_expense <= b.monthly_income);
        }
    }

    #[test]
    fn income_marginal_matches_table() {
        let c = DistributionConfig::default();
        let pop = sample_population(&c, 10_000, &mut rng(21)).unwrap();
        let mut xs: Vec<f64> = pop
            .iter()
            .map(|b| b.monthly_income.as_dollars_f64())
            .collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = c.income.quantiles.cdf(x);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.05, "KS distance {ks}");
    }

    #[test]
    fn income_and_savings_correlate() {
        let pop = sample_population(&DistributionConfig::default(), 5000, &mut rng(13)).unwrap();
        let xs: Vec<f64> = pop
            .iter()
            .map(|b| b.monthly_income.as_dollars_f64())
            .collect();
        let ys: Vec<f64> = pop.iter().map(|b| b.savings.as_dollars_f64()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        assert!(cov > 0.0);
    }

    #[test]
    fn beta_gamma_is_centered() {
        let mut r = rng(2);
        let d = GammaDist::Beta { alpha: 2, beta: 2 };
        let xs: Vec<f64> = (0..20_000).map(|_| d.sample(&mut r)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        // Beta(2,2): mean 1/2, variance 1/20
        assert!((mean - 0.5).abs() < 0.01);
        assert!((var - 0.05).abs() < 0.003);
    }
}
