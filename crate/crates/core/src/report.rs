//! Seed-aggregated summaries and run-to-run comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::domain::IncomeQuintile;
use crate::error::{Error, Result};
use crate::metrics::{fmt_fraction, quintile_label, MetricsBundle, RateTable, TimeToAffect};
use crate::scenario::RunManifest as Manifest;

/// Summary file holding one row per (variant, shock, metric, group).
pub const SUMMARY_METRICS: &str = "metrics.csv";
pub const SUMMARY_SERVICER: &str = "servicer.csv";

/// Metrics reported as fractions; their deltas are also shown in percentage points.
pub const RATE_METRICS: [&str; 4] = [
    "affected_rate",
    "foreclosure_rate",
    "mra_uptake_rate",
    "pay_full_share",
];

fn groups() -> impl Iterator<Item = (String, Option<IncomeQuintile>)> {
    IncomeQuintile::ALL
        .into_iter()
        .map(|q| (quintile_label(q), Some(q)))
        .chain(std::iter::once(("all".to_string(), None)))
}

fn rate(t: &RateTable, q: Option<IncomeQuintile>) -> f64 {
    match q {
        Some(q) => t.rate(q),
        None => t.overall(),
    }
}

fn tta(b: &MetricsBundle, q: Option<IncomeQuintile>) -> &TimeToAffect {
    match q {
        Some(q) => &b.time_to_affect[q.slot()],
        None => &b.time_to_affect_overall,
    }
}

/// One metric of one bundle; `None` when undefined for that bundle.
fn metric_values(b: &MetricsBundle) -> Vec<(&'static str, String, Option<f64>)> {
    let mut out = Vec::new();
    for (g, q) in groups() {
        out.push(("affected_rate", g.clone(), Some(rate(&b.affected, q))));
        out.push(("foreclosure_rate", g.clone(), Some(rate(&b.foreclosure, q))));
        if let Some(t) = &b.mra_uptake {
            out.push(("mra_uptake_rate", g.clone(), Some(rate(t, q))));
        }
        out.push(("time_to_affect_mean", g.clone(), tta(b, q).mean()));
        out.push(("time_to_affect_median", g, tta(b, q).median()));
    }
    let n = b.meta.n_borrowers.max(1) as f64;
    out.push((
        "net_profit_per_borrower",
        "all".into(),
        Some(b.cumulative_net_profit_per_borrower().as_dollars_f64()),
    ));
    out.push((
        "write_offs_per_borrower",
        "all".into(),
        Some(b.write_off_total().as_dollars_f64() / n),
    ));
    out.push((
        "pay_full_share",
        "all".into(),
        Some(b.actions.pay_full_share()),
    ));
    out
}

/// Renders the seed-aggregated summary files for a run, in cell order.
pub fn render_summary(
    manifest: &Manifest,
    bundles: &[MetricsBundle],
) -> Vec<(&'static str, String)> {
    // (variant, shock) in first-seen order
    let mut order: Vec<(String, f64)> = Vec::new();
    let mut by_cell: BTreeMap<(String, u64), Vec<&MetricsBundle>> = BTreeMap::new();
    for (cell, b) in manifest.cells.iter().zip(bundles) {
        let key = (cell.variant.clone(), cell.shock_size.to_bits());
        if !by_cell.contains_key(&key) {
            order.push((cell.variant.clone(), cell.shock_size));
        }
        by_cell.entry(key).or_default().push(b);
    }

    let mut metrics = String::from("variant,shock_size,metric,group,mean,min,max,seeds\n");
    let mut servicer =
        String::from("variant,shock_size,month,net_cash_per_borrower,cumulative_per_borrower\n");
    for (variant, shock) in &order {
        let cell = &by_cell[&(variant.clone(), shock.to_bits())];
        let mut rows: Vec<(&'static str, String, Vec<f64>)> = Vec::new();
        for b in cell {
            for (i, (metric, group, v)) in metric_values(b).into_iter().enumerate() {
                if rows.len() <= i {
                    rows.push((metric, group, Vec::new()));
                }
                rows[i].2.extend(v);
            }
        }
        for (metric, group, values) in rows {
            let (mean, min, max) = if values.is_empty() {
                (String::new(), String::new(), String::new())
            } else {
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                (fmt_fraction(mean), fmt_fraction(lo), fmt_fraction(hi))
            };
            let _ = writeln!(
                metrics,
                "{variant},{shock},{metric},{group},{mean},{min},{max},{}",
                values.len()
            );
        }
        let months = cell
            .iter()
            .map(|b| b.servicer_monthly.len())
            .max()
            .unwrap_or(0);
        let mut running = 0.0;
        for m in 0..months {
            let per: Vec<f64> = cell
                .iter()
                .filter_map(|b| b.net_cash_per_borrower().get(m).map(|x| x.as_dollars_f64()))
                .collect();
            let mean = per.iter().sum::<f64>() / per.len().max(1) as f64;
            running += mean;
            let _ = writeln!(servicer, "{variant},{shock},{m},{mean:.2},{running:.2}");
        }
    }
    vec![(SUMMARY_METRICS, metrics), (SUMMARY_SERVICER, servicer)]
}

type SummaryKey = (String, String, String, String);

/// Seed means from a run's summary, keyed by (variant, shock, metric, group).
fn read_summary(run_dir: &Path) -> Result<BTreeMap<SummaryKey, Option<f64>>> {
    let path = run_dir.join("summary").join(SUMMARY_METRICS);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let bad = |line: usize, what: &str| Error::Parse {
        path: path.clone(),
        message: format!("line {line}: {what}"),
    };
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad(i + 1, "expected 8 columns"));
        }
        let mean = if f[4].is_empty() {
            None
        } else {
            Some(f[4].parse::<f64>().map_err(|_| bad(i + 1, "bad mean"))?)
        };
        out.insert(
            (
                f[0].to_string(),
                f[1].to_string(),
                f[2].to_string(),
                f[3].to_string(),
            ),
            mean,
        );
    }
    Ok(out)
}

/// Explains every comparability-critical difference between two runs.
pub fn comparability_problems(a: &Manifest, b: &Manifest) -> Vec<String> {
    let (x, y) = (&a.comparability, &b.comparability);
    let mut out = Vec::new();
    if x.n_borrowers != y.n_borrowers {
        out.push(format!(
            "n_borrowers differs ({} vs {})",
            x.n_borrowers, y.n_borrowers
        ));
    }
    if x.seeds != y.seeds {
        out.push(format!("seeds differ ({:?} vs {:?})", x.seeds, y.seeds));
    }
    if x.eval_months != y.eval_months {
        out.push(format!(
            "evaluation horizon differs ({} vs {} months)",
            x.eval_months, y.eval_months
        ));
    }
    if x.shock_month != y.shock_month {
        out.push(format!(
            "shock month differs ({} vs {})",
            x.shock_month, y.shock_month
        ));
    }
    if x.seeds == y.seeds && x.population_hashes != y.population_hashes {
        out.push("evaluation populations differ".into());
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct CompareOptions {
    pub variant_a: Option<String>,
    pub variant_b: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRow {
    pub shock_size: String,
    pub metric: String,
    pub group: String,
    pub variant_a: String,
    pub variant_b: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
}

impl DeltaRow {
    /// `b - a`; `None` when either side is undefined.
    pub fn delta(&self) -> Option<f64> {
        Some(self.b? - self.a?)
    }

    /// Delta in percentage points, for rate metrics only.
    pub fn delta_pp(&self) -> Option<f64> {
        if RATE_METRICS.contains(&self.metric.as_str()) {
            self.delta().map(|d| d * 100.0)
        } else {
            None
        }
    }
}

fn variant_pairs(
    a: &Manifest,
    b: &Manifest,
    opts: &CompareOptions,
) -> Result<Vec<(String, String)>> {
    let pick = |m: &Manifest, want: &Option<String>, side: &str| -> Result<Option<String>> {
        match want {
            Some(v) if m.variants.contains(v) => Ok(Some(v.clone())),
            Some(v) => Err(Error::NotComparable(format!(
                "run {side} has no variant `{v}` (has {:?})",
                m.variants
            ))),
            None => Ok(None),
        }
    };
    let va = pick(a, &opts.variant_a, "A")?;
    let vb = pick(b, &opts.variant_b, "B")?;
    let only = |m: &Manifest| (m.variants.len() == 1).then(|| m.variants[0].clone());
    match (va.or_else(|| only(a)), vb.or_else(|| only(b))) {
        (Some(x), Some(y)) => Ok(vec![(x, y)]),
        _ if a.variants == b.variants => {
            Ok(a.variants.iter().map(|v| (v.clone(), v.clone())).collect())
        }
        _ => Err(Error::NotComparable(format!(
            "cannot pair product variants {:?} with {:?}; choose one from each run",
            a.variants, b.variants
        ))),
    }
}

/// Per-quintile metric deltas of run B against run A.
pub fn compare(a_dir: &Path, b_dir: &Path, opts: &CompareOptions) -> Result<Vec<DeltaRow>> {
    let a = Manifest::read(a_dir)?;
    let b = Manifest::read(b_dir)?;
    let problems = comparability_problems(&a, &b);
    if !problems.is_empty() {
        return Err(Error::NotComparable(problems.join("; ")));
    }
    let shocks: Vec<f64> = a
        .shock_grid
        .iter()
        .copied()
        .filter(|s| b.shock_grid.iter().any(|t| t.to_bits() == s.to_bits()))
        .collect();
    if shocks.is_empty() {
        return Err(Error::NotComparable(format!(
            "no shock size in common ({:?} vs {:?})",
            a.shock_grid, b.shock_grid
        )));
    }
    let pairs = variant_pairs(&a, &b, opts)?;
    let sa = read_summary(a_dir)?;
    let sb = read_summary(b_dir)?;
    let mut rows = Vec::new();
    for (va, vb) in &pairs {
        for shock in &shocks {
            let shock = shock.to_string();
            // rows come out sorted by metric, then group
            for ((v, s, metric, group), &x) in &sa {
                if v != va || *s != shock {
                    continue;
                }
                let key = (vb.clone(), shock.clone(), metric.clone(), group.clone());
                let Some(&y) = sb.get(&key) else { continue };
                rows.push(DeltaRow {
                    shock_size: shock.clone(),
                    metric: metric.clone(),
                    group: group.clone(),
                    variant_a: va.clone(),
                    variant_b: vb.clone(),
                    a: x,
                    b: y,
                });
            }
        }
    }
    Ok(rows)
}

pub fn render_deltas(rows: &[DeltaRow]) -> String {
    let opt = |x: Option<f64>| x.map(fmt_fraction).unwrap_or_default();
    let mut out = String::from("shock_size,metric,group,variant_a,variant_b,a,b,delta,delta_pp\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.shock_size,
            r.metric,
            r.group,
            r.variant_a,
            r.variant_b,
            opt(r.a),
            opt(r.b),
            opt(r.delta()),
            opt(r.delta_pp())
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{CellEntry, Comparability, RUN_FORMAT_VERSION};

    fn manifest(n: usize, variants: &[&str]) -> Manifest {
        Manifest {
            format_version: RUN_FORMAT_VERSION,
            config_hash: "h".into(),
            comparability: Comparability {
                n_borrowers: n,
                seeds: vec![1],
                eval_months: 24,
                shock_month: 0,
                population_hashes: [(1, "p".to_string())].into(),
            },
            shock_grid: vec![0.3],
            variants: variants.iter().map(|s| s.to_string()).collect(),
            paired: true,
            trained: true,
            cells: Vec::<CellEntry>::new(),
        }
    }

    #[test]
    fn mismatches_are_all_explained() {
        let a = manifest(100, &["off"]);
        let mut b = manifest(200, &["off"]);
        b.comparability.eval_months = 12;
        let p = comparability_problems(&a, &b);
        assert_eq!(p.len(), 2, "{p:?}");
        assert!(p[0].contains("n_borrowers"));
        assert!(comparability_problems(&a, &a).is_empty());
    }

    #[test]
    fn pairing_rules() {
        let off = manifest(1, &["off"]);
        let up = manifest(1, &["upfront-0", "upfront-5000"]);
        let none = CompareOptions::default();
        assert_eq!(
            variant_pairs(&off, &off, &none).unwrap(),
            [("off".to_string(), "off".to_string())]
        );
        assert_eq!(variant_pairs(&up, &up, &none).unwrap().len(), 2);
        assert!(matches!(
            variant_pairs(&off, &up, &none),
            Err(Error::NotComparable(_))
        ));
        let pick = CompareOptions {
            variant_a: Some("upfront-0".into()),
            variant_b: Some("upfront-5000".into()),
        };
        assert_eq!(
            variant_pairs(&up, &up, &pick).unwrap(),
            [("upfront-0".to_string(), "upfront-5000".to_string())]
        );
    }

    #[test]
    fn pp_only_for_rates() {
        let row = |metric: &str| DeltaRow {
            shock_size: "0.3".into(),
            metric: metric.into(),
            group: "q1".into(),
            variant_a: "a".into(),
            variant_b: "b".into(),
            a: Some(0.5),
            b: Some(0.375),
        };
        assert_eq!(row("foreclosure_rate").delta_pp(), Some(-12.5));
        assert_eq!(row("time_to_affect_mean").delta_pp(), None);
        assert_eq!(row("time_to_affect_mean").delta(), Some(-0.125));
    }
}
