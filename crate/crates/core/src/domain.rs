//! Shared value types: fixed-point money, rates, quintiles and the simulation clock.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest absolute dollar amount accepted from configuration.
const MAX_DOLLARS: i128 = 1_000_000_000_000;

/// Signed amount of US currency held as whole cents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_cents(cents: i64) -> Self {
        Money(cents)
    }

    pub const fn cents(self) -> i64 {
        self.0
    }

    /// Whole-dollar constructor, used for literals in tests and defaults.
    pub const fn dollars(d: i64) -> Self {
        Money(d * 100)
    }

    pub fn as_dollars_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn max(self, other: Money) -> Money {
        Money(self.0.max(other.0))
    }

    pub fn min(self, other: Money) -> Money {
        Money(self.0.min(other.0))
    }

    pub fn clamp_non_negative(self) -> Money {
        Money(self.0.max(0))
    }

    /// `self × factor`, rounded half-to-even to the nearest cent.
    pub fn scale(self, factor: f64) -> Money {
        Money::from_f64_cents(self.0 as f64 * factor)
    }

    /// Rounds a cent quantity computed in floating point back onto the ledger grid.
    pub fn from_f64_cents(cents: f64) -> Money {
        Money(cents.round_ties_even() as i64)
    }

    /// Rounds a dollar quantity computed in floating point back onto the ledger grid.
    pub fn from_f64_dollars(dollars: f64) -> Money {
        Money::from_f64_cents(dollars * 100.0)
    }

    /// Splits `self` into `parts` near-equal pieces; the last piece absorbs the remainder.
    pub fn split_even(self, parts: u32) -> Vec<Money> {
        assert!(parts > 0, "split into zero parts");
        let base = self.0 / parts as i64;
        let mut out = vec![Money(base); parts as usize];
        let last = out.len() - 1;
        out[last] = Money(self.0 - base * (parts as i64 - 1));
        out
    }

    /// `numerator / denominator` as a real ratio; zero when the denominator is zero.
    pub fn ratio(self, denominator: Money) -> f64 {
        if denominator.0 == 0 {
            0.0
        } else {
            self.0 as f64 / denominator.0 as f64
        }
    }
}

/// Parses a decimal dollar string exactly, rounding sub-cent digits half-to-even.
pub fn money_from_dollars(text: &str) -> Result<Money> {
    let overflow = || Error::Config(format!("dollar amount `{text}` out of range"));
    let malformed = || Error::Config(format!("malformed dollar amount `{text}`"));

    let trimmed = text.trim();
    let (negative, body) = match trimmed.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, trimmed.strip_prefix('+').unwrap_or(trimmed)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    let digits_ok = |s: &str| s.chars().all(|c| c.is_ascii_digit());
    if (int_part.is_empty() && frac_part.is_empty())
        || !digits_ok(int_part)
        || !digits_ok(frac_part)
    {
        return Err(malformed());
    }
    let int_digits = int_part.trim_start_matches('0');
    if int_digits.len() > 13 {
        return Err(overflow());
    }
    let whole: i128 = if int_digits.is_empty() {
        0
    } else {
        int_digits.parse().map_err(|_| malformed())?
    };

    let frac_bytes = frac_part.as_bytes();
    let digit = |i: usize| frac_bytes.get(i).map_or(0, |b| (b - b'0') as i128);
    let mut cents = whole * 100 + digit(0) * 10 + digit(1);
    let rest = if frac_bytes.len() > 2 {
        &frac_part[2..]
    } else {
        ""
    };
    if let Some(first) = rest.bytes().next() {
        let tail_nonzero = rest[1..].bytes().any(|b| b != b'0');
        let round_up = match first {
            b'6'..=b'9' => true,
            b'5' => tail_nonzero || cents % 2 == 1,
            _ => false,
        };
        if round_up {
            cents += 1;
        }
    }
    if cents >= MAX_DOLLARS * 100 {
        return Err(overflow());
    }
    Ok(Money(if negative {
        -cents as i64
    } else {
        cents as i64
    }))
}

impl FromStr for Money {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        money_from_dollars(s.trim_start_matches('$'))
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.copied().sum()
    }
}

// Config files carry dollars; numbers go through their shortest decimal form so
// that `0.005` parses as the decimal it reads as.
impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 % 100 == 0 {
            s.serialize_i64(self.0 / 100)
        } else {
            s.serialize_f64(self.0 as f64 / 100.0)
        }
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let text = match Repr::deserialize(d)? {
            Repr::Int(i) => i.to_string(),
            Repr::Float(f) => format!("{f}"),
            Repr::Text(t) => t,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Dimensionless non-negative fraction per period.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Rate(f64);

impl Rate {
    pub const ZERO: Rate = Rate(0.0);

    pub fn new(value: f64) -> Result<Rate> {
        if value.is_finite() && value >= 0.0 {
            Ok(Rate(value))
        } else {
            Err(Error::Config(format!(
                "rate must be a finite non-negative fraction, got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Converts a nominal annual rate (compounded monthly) to its monthly rate.
    pub fn annual_to_monthly(self) -> Rate {
        Rate(self.0 / 12.0)
    }
}

impl TryFrom<f64> for Rate {
    type Error = Error;
    fn try_from(v: f64) -> Result<Rate> {
        Rate::new(v)
    }
}

impl From<Rate> for f64 {
    fn from(r: Rate) -> f64 {
        r.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BorrowerId(pub u32);

impl fmt::Display for BorrowerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Pre-shock income quintile, 1 = lowest income.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct IncomeQuintile(u8);

impl IncomeQuintile {
    pub const ALL: [IncomeQuintile; 5] = [
        IncomeQuintile(1),
        IncomeQuintile(2),
        IncomeQuintile(3),
        IncomeQuintile(4),
        IncomeQuintile(5),
    ];

    pub fn new(index: u8) -> Result<Self> {
        if (1..=5).contains(&index) {
            Ok(IncomeQuintile(index))
        } else {
            Err(Error::Config(format!(
                "income quintile must be in 1..=5, got {index}"
            )))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// Zero-based position, handy for indexing per-quintile arrays.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }
}

impl TryFrom<u8> for IncomeQuintile {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        IncomeQuintile::new(v)
    }
}

impl From<IncomeQuintile> for u8 {
    fn from(q: IncomeQuintile) -> u8 {
        q.0
    }
}

impl fmt::Display for IncomeQuintile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}", self.0)
    }
}

/// Ranks `incomes` and assigns quintiles so that group sizes differ by at most one.
///
/// Ties are broken by position, so the assignment is a pure function of the input order.
pub fn assign_quintiles(incomes: &[Money]) -> Vec<IncomeQuintile> {
    let n = incomes.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (incomes[i], i));
    let mut out = vec![IncomeQuintile(1); n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = IncomeQuintile((rank * 5 / n.max(1)) as u8 + 1);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Train,
    Evaluate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimClock {
    pub month: u32,
    pub phase: Phase,
}

impl SimClock {
    pub fn new(phase: Phase) -> Self {
        SimClock { month: 0, phase }
    }

    pub fn tick(&mut self) {
        self.month += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_whole_and_fractional_dollars() {
        assert_eq!(
            money_from_dollars("1000.00").unwrap(),
            Money::from_cents(100_000)
        );
        assert_eq!(money_from_dollars("0").unwrap(), Money::ZERO);
        assert_eq!(
            money_from_dollars("1199.1").unwrap(),
            Money::from_cents(119_910)
        );
        assert_eq!(
            money_from_dollars("-3.07").unwrap(),
            Money::from_cents(-307)
        );
    }

    #[test]
    fn sub_cent_inputs_round_half_even() {
        assert_eq!(money_from_dollars("0.005").unwrap(), Money::ZERO);
        assert_eq!(money_from_dollars("0.015").unwrap(), Money::from_cents(2));
        assert_eq!(money_from_dollars("0.025").unwrap(), Money::from_cents(2));
        assert_eq!(money_from_dollars("0.0251").unwrap(), Money::from_cents(3));
        assert_eq!(money_from_dollars("0.0049").unwrap(), Money::ZERO);
        assert_eq!(money_from_dollars("-0.015").unwrap(), Money::from_cents(-2));
    }

    #[test]
    fn rejects_overflow_and_garbage() {
        assert!(matches!(
            money_from_dollars("1000000000000"),
            Err(Error::Config(_))
        ));
        assert!(money_from_dollars("999999999999.99").is_ok());
        assert!(money_from_dollars("12a").is_err());
        assert!(money_from_dollars(".").is_err());
        assert!(money_from_dollars("").is_err());
    }

    #[test]
    fn display_is_fixed_two_places() {
        assert_eq!(Money::from_cents(119_910).to_string(), "1199.10");
        assert_eq!(Money::from_cents(-5).to_string(), "-0.05");
    }

    #[test]
    fn deserializes_numbers_as_decimals() {
        #[derive(Deserialize)]
        struct W {
            m: Money,
        }
        let w: W = toml::from_str("m = 0.005").unwrap();
        assert_eq!(w.m, Money::ZERO);
        let w: W = toml::from_str("m = 2500").unwrap();
        assert_eq!(w.m, Money::dollars(2500));
        let w: W = toml::from_str("m = \"1199.10\"").unwrap();
        assert_eq!(w.m, Money::from_cents(119_910));
    }

    #[test]
    fn split_even_conserves_total() {
        let parts = Money::from_cents(479_640).split_even(6);
        assert_eq!(parts.iter().sum::<Money>(), Money::from_cents(479_640));
        assert_eq!(parts[0], Money::from_cents(79_940));
    }

    #[test]
    fn quintile_bounds() {
        assert!(IncomeQuintile::new(0).is_err());
        assert!(IncomeQuintile::new(6).is_err());
        assert_eq!(IncomeQuintile::new(3).unwrap().slot(), 2);
    }

    proptest! {
        #[test]
        fn money_sum_is_permutation_invariant(
            mut xs in proptest::collection::vec(-1_000_000_000i64..1_000_000_000, 0..60),
            seed in any::<u64>(),
        ) {
            let total: Money = xs.iter().map(|&c| Money::from_cents(c)).sum();
            // deterministic shuffle
            let mut state = seed | 1;
            for i in (1..xs.len()).rev() {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                xs.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let reordered: Money = xs.iter().map(|&c| Money::from_cents(c)).sum();
            prop_assert_eq!(total, reordered);
            let exact: i128 = xs.iter().map(|&c| c as i128).sum();
            prop_assert_eq!(total.cents() as i128, exact);
        }

        #[test]
        fn quintiles_partition_evenly(incomes in proptest::collection::vec(0i64..5_000_000, 5..400)) {
            let incomes: Vec<Money> = incomes.into_iter().map(Money::from_cents).collect();
            let q = assign_quintiles(&incomes);
            let mut sizes = [0usize; 5];
            for x in &q {
                sizes[x.slot()] += 1;
            }
            let max = *sizes.iter().max().unwrap();
            let min = *sizes.iter().min().unwrap();
            prop_assert!(max - min <= 1);
            // higher quintile never has a strictly lower income than a lower quintile
            for i in 0..incomes.len() {
                for j in 0..incomes.len() {
                    if q[i] < q[j] {
                        prop_assert!(incomes[i] <= incomes[j]);
                    }
                }
            }
        }

        #[test]
        fn whole_cent_strings_round_trip(c in -99_999_999_999i64..99_999_999_999) {
            let m = Money::from_cents(c);
            prop_assert_eq!(money_from_dollars(&m.to_string()).unwrap(), m);
        }
    }
}
