//! Evaluation metrics by income quintile and their CSV output.
//!
//! All months are evaluation-month indices. A month counts as missed only
//! when part of the amount due went unpaid after any reserve-account draw.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{IncomeQuintile, Money};
use crate::error::{Error, Result};
use crate::servicing::MonthlyFlows;

/// Version of the CSV and manifest layout.
pub const FORMAT_VERSION: u32 = 1;

/// What happened to one borrower during evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BorrowerHistory {
    pub quintile: IncomeQuintile,
    /// Months with an uncovered shortfall, ascending.
    pub missed_months: Vec<u32>,
    /// Months where a reserve-account draw covered the whole shortfall.
    pub covered_months: Vec<u32>,
    pub foreclosed_month: Option<u32>,
    /// `Some` when the borrower was offered a matched reserve account; zero
    /// means declined.
    pub mra_contribution: Option<Money>,
}

impl BorrowerHistory {
    pub fn new(quintile: IncomeQuintile) -> Self {
        BorrowerHistory {
            quintile,
            missed_months: Vec::new(),
            covered_months: Vec::new(),
            foreclosed_month: None,
            mra_contribution: None,
        }
    }

    pub fn first_miss_in(&self, window: &Range<u32>) -> Option<u32> {
        self.missed_months
            .iter()
            .copied()
            .find(|m| window.contains(m))
    }
}

/// Counts per quintile; rates are derived so that the overall rate is exactly
/// the borrower-weighted mean of the quintile rates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateTable {
    pub hits: [usize; 5],
    pub counts: [usize; 5],
}

impl RateTable {
    fn tally<'a>(
        histories: impl IntoIterator<Item = &'a BorrowerHistory>,
        hit: impl Fn(&BorrowerHistory) -> bool,
    ) -> Self {
        let mut t = RateTable::default();
        for h in histories {
            let q = h.quintile.slot();
            t.counts[q] += 1;
            t.hits[q] += hit(h) as usize;
        }
        t
    }

    /// Zero for an empty quintile.
    pub fn rate(&self, q: IncomeQuintile) -> f64 {
        ratio(self.hits[q.slot()], self.counts[q.slot()])
    }

    pub fn overall(&self) -> f64 {
        ratio(self.hits.iter().sum(), self.counts.iter().sum())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Share of borrowers with at least one uncovered miss in `window`.
pub fn affected_rate(histories: &[BorrowerHistory], window: Range<u32>) -> RateTable {
    RateTable::tally(histories, |h| h.first_miss_in(&window).is_some())
}

/// Share of borrowers foreclosed by the end of the horizon.
pub fn foreclosure_rate(histories: &[BorrowerHistory]) -> RateTable {
    RateTable::tally(histories, |h| h.foreclosed_month.is_some())
}

/// Share of borrowers offered a matched account who contributed.
pub fn mra_uptake(histories: &[BorrowerHistory]) -> Option<RateTable> {
    let offered: Vec<&BorrowerHistory> = histories
        .iter()
        .filter(|h| h.mra_contribution.is_some())
        .collect();
    if offered.is_empty() {
        return None;
    }
    Some(RateTable::tally(offered, |h| {
        h.mra_contribution.is_some_and(|m| m.is_positive())
    }))
}

/// Months from the shock to the first uncovered miss, over affected borrowers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeToAffect {
    /// Sorted ascending.
    pub samples: Vec<u32>,
}

impl TimeToAffect {
    /// `None` when no borrower was affected.
    pub fn mean(&self) -> Option<f64> {
        if self.samples.is_empty() {
            return None;
        }
        Some(self.samples.iter().map(|&s| s as f64).sum::<f64>() / self.samples.len() as f64)
    }

    pub fn median(&self) -> Option<f64> {
        let n = self.samples.len();
        match n {
            0 => None,
            _ if n % 2 == 1 => Some(self.samples[n / 2] as f64),
            _ => Some((self.samples[n / 2 - 1] as f64 + self.samples[n / 2] as f64) / 2.0),
        }
    }

    /// `(months, borrowers)` pairs, ascending.
    pub fn distribution(&self) -> Vec<(u32, usize)> {
        let mut out: Vec<(u32, usize)> = Vec::new();
        for &s in &self.samples {
            match out.last_mut() {
                Some((m, c)) if *m == s => *c += 1,
                _ => out.push((s, 1)),
            }
        }
        out
    }
}

/// Per quintile, then overall.
pub fn time_to_affect(
    histories: &[BorrowerHistory],
    shock_month: u32,
    horizon: u32,
) -> ([TimeToAffect; 5], TimeToAffect) {
    let window = shock_month..horizon;
    let mut per: [TimeToAffect; 5] = Default::default();
    let mut all = TimeToAffect::default();
    for h in histories {
        if let Some(m) = h.first_miss_in(&window) {
            per[h.quintile.slot()].samples.push(m - shock_month);
            all.samples.push(m - shock_month);
        }
    }
    for t in per.iter_mut().chain(std::iter::once(&mut all)) {
        t.samples.sort_unstable();
    }
    (per, all)
}

/// Borrower decisions during evaluation, by kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCounts {
    pub pay_full: u64,
    pub pay_savings: u64,
    pub miss: u64,
    pub accept_relief: u64,
    pub decline_relief: u64,
    pub enroll: u64,
    pub decline_enroll: u64,
}

impl ActionCounts {
    pub fn total(&self) -> u64 {
        self.pay_full
            + self.pay_savings
            + self.miss
            + self.accept_relief
            + self.decline_relief
            + self.enroll
            + self.decline_enroll
    }

    pub fn pay_full_share(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.pay_full as f64 / t as f64
        }
    }
}

/// Identifies the run a bundle came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub config_hash: String,
    pub variant: String,
    pub shock_size: f64,
    pub shock_month: u32,
    pub eval_months: u32,
    pub n_borrowers: usize,
    pub population_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub meta: RunMeta,
    pub affected: RateTable,
    pub time_to_affect: [TimeToAffect; 5],
    pub time_to_affect_overall: TimeToAffect,
    pub foreclosure: RateTable,
    pub mra_uptake: Option<RateTable>,
    pub servicer_monthly: Vec<MonthlyFlows>,
    pub fee_income_by_quintile: [Money; 5],
    pub actions: ActionCounts,
}

impl MetricsBundle {
    /// Builds every metric from the evaluation histories. The affected window
    /// runs from the shock month to the horizon.
    pub fn from_histories(
        meta: RunMeta,
        histories: &[BorrowerHistory],
        servicer_monthly: Vec<MonthlyFlows>,
        fee_income_by_quintile: [Money; 5],
        actions: ActionCounts,
    ) -> Self {
        let (tta, tta_all) = time_to_affect(histories, meta.shock_month, meta.eval_months);
        MetricsBundle {
            affected: affected_rate(histories, meta.shock_month..meta.eval_months),
            time_to_affect: tta,
            time_to_affect_overall: tta_all,
            foreclosure: foreclosure_rate(histories),
            mra_uptake: mra_uptake(histories),
            servicer_monthly,
            fee_income_by_quintile,
            actions,
            meta,
        }
    }

    /// Servicer net cash per borrower, month by month.
    pub fn net_cash_per_borrower(&self) -> Vec<Money> {
        let n = self.meta.n_borrowers.max(1) as f64;
        self.servicer_monthly
            .iter()
            .map(|f| Money::from_f64_cents(f.net_cash().cents() as f64 / n))
            .collect()
    }

    /// Cumulative servicer net cash over the horizon, per borrower.
    pub fn cumulative_net_profit_per_borrower(&self) -> Money {
        let total: Money = self
            .servicer_monthly
            .iter()
            .map(MonthlyFlows::net_cash)
            .sum();
        Money::from_f64_cents(total.cents() as f64 / self.meta.n_borrowers.max(1) as f64)
    }

    pub fn write_off_total(&self) -> Money {
        self.servicer_monthly.iter().map(|f| f.write_offs).sum()
    }
}

pub fn fmt_fraction(x: f64) -> String {
    format!("{x:.6}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_fraction).unwrap_or_default()
}

pub fn quintile_label(q: IncomeQuintile) -> String {
    format!("q{}", q.index())
}

/// File names written by [`write_csv`], in order.
pub const BUNDLE_FILES: [&str; 6] = [
    "rates.csv",
    "time_to_affect.csv",
    "time_to_affect_distribution.csv",
    "servicer.csv",
    "fee_income.csv",
    "actions.csv",
];

/// Renders each CSV file of the bundle, paired with its file name.
pub fn render_csv(bundle: &MetricsBundle) -> Vec<(&'static str, String)> {
    let empty = bundle.affected.total() == 0;
    let mut rates =
        String::from("quintile,borrowers,affected_rate,foreclosure_rate,mra_uptake_rate\n");
    let mut tta = String::from("quintile,affected,mean_months,median_months\n");
    let mut dist = String::from("quintile,months,borrowers\n");
    let mut fees = String::from("quintile,fee_income\n");
    if !empty {
        let uptake = |q: Option<IncomeQuintile>| match (&bundle.mra_uptake, q) {
            (None, _) => String::new(),
            (Some(t), Some(q)) => fmt_fraction(t.rate(q)),
            (Some(t), None) => fmt_fraction(t.overall()),
        };
        for q in IncomeQuintile::ALL {
            let _ = writeln!(
                rates,
                "{},{},{},{},{}",
                quintile_label(q),
                bundle.affected.counts[q.slot()],
                fmt_fraction(bundle.affected.rate(q)),
                fmt_fraction(bundle.foreclosure.rate(q)),
                uptake(Some(q))
            );
        }
        let _ = writeln!(
            rates,
            "all,{},{},{},{}",
            bundle.affected.total(),
            fmt_fraction(bundle.affected.overall()),
            fmt_fraction(bundle.foreclosure.overall()),
            uptake(None)
        );
        let labelled = IncomeQuintile::ALL
            .iter()
            .map(|&q| (quintile_label(q), &bundle.time_to_affect[q.slot()]))
            .chain(std::iter::once((
                "all".to_string(),
                &bundle.time_to_affect_overall,
            )));
        for (label, t) in labelled {
            let _ = writeln!(
                tta,
                "{label},{},{},{}",
                t.samples.len(),
                fmt_opt(t.mean()),
                fmt_opt(t.median())
            );
            for (m, c) in t.distribution() {
                let _ = writeln!(dist, "{label},{m},{c}");
            }
        }
        for q in IncomeQuintile::ALL {
            let _ = writeln!(
                fees,
                "{},{}",
                quintile_label(q),
                bundle.fee_income_by_quintile[q.slot()]
            );
        }
        let total: Money = bundle.fee_income_by_quintile.iter().copied().sum();
        let _ = writeln!(fees, "all,{total}");
    }

    let mut servicer = String::from(
        "month,fees,incentives,advances,recoveries,write_offs,mra_match,net_cash,net_cash_per_borrower,cumulative_per_borrower\n",
    );
    let per_borrower = bundle.net_cash_per_borrower();
    let mut running = Money::ZERO;
    for (m, f) in bundle.servicer_monthly.iter().enumerate() {
        running += f.net_cash();
        let cum =
            Money::from_f64_cents(running.cents() as f64 / bundle.meta.n_borrowers.max(1) as f64);
        let _ = writeln!(
            servicer,
            "{m},{},{},{},{},{},{},{},{},{cum}",
            f.fees,
            f.incentives,
            f.advances,
            f.recoveries,
            f.write_offs,
            f.mra_match,
            f.net_cash(),
            per_borrower[m]
        );
    }

    let a = &bundle.actions;
    let mut actions = String::from("action,count\n");
    if a.total() > 0 {
        for (name, c) in [
            ("pay_full", a.pay_full),
            ("pay_savings", a.pay_savings),
            ("miss", a.miss),
            ("accept_relief", a.accept_relief),
            ("decline_relief", a.decline_relief),
            ("enroll_reserve", a.enroll),
            ("decline_reserve", a.decline_enroll),
        ] {
            let _ = writeln!(actions, "{name},{c}");
        }
    }

    vec![
        (BUNDLE_FILES[0], rates),
        (BUNDLE_FILES[1], tta),
        (BUNDLE_FILES[2], dist),
        (BUNDLE_FILES[3], servicer),
        (BUNDLE_FILES[4], fees),
        (BUNDLE_FILES[5], actions),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    #[serde(flatten)]
    pub meta: RunMeta,
    pub files: Vec<String>,
}

/// Writes the bundle's CSV files and `manifest.json` into `dir`.
pub fn write_csv(bundle: &MetricsBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (name, body) in render_csv(bundle) {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        meta: bundle.meta.clone(),
        files: BUNDLE_FILES.iter().map(|s| s.to_string()).collect(),
    };
    let path = dir.join("manifest.json");
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Snapshot(e.to_string()))? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}
