//! Point-forecast accuracy and paired comparison tests.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::pipeline::ForecastRow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub mse: f64,
    pub mae: f64,
    pub mape_percent: f64,
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    Ok(())
}

pub fn point_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<MetricReport> {
    check_pair(y_true, y_pred)?;
    if let Some(i) = y_true.iter().position(|&y| y == 0.0) {
        return Err(Error::ZeroActual(i));
    }
    let n = y_true.len() as f64;
    let (mut se, mut ae, mut pe) = (0.0, 0.0, 0.0);
    for (&y, &p) in y_true.iter().zip(y_pred) {
        let e = y - p;
        se += e * e;
        ae += e.abs();
        pe += (e / y).abs();
    }
    Ok(MetricReport {
        n: y_true.len(),
        mse: se / n,
        mae: ae / n,
        mape_percent: 100.0 * pe / n,
    })
}

/// Forecast errors `y_pred - y_true`.
pub fn errors(y_true: &[f64], y_pred: &[f64]) -> Result<Vec<f64>> {
    check_pair(y_true, y_pred)?;
    Ok(y_pred.iter().zip(y_true).map(|(p, y)| p - y).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DmLoss {
    Squared,
    Absolute,
}

impl DmLoss {
    pub fn apply(self, e: f64) -> f64 {
        match self {
            DmLoss::Squared => e * e,
            DmLoss::Absolute => e.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Wilcoxon: `W`, the positive rank sum. Diebold-Mariano: the mean loss
    /// differential.
    pub statistic: f64,
    pub z_or_t: f64,
    /// Two-sided.
    pub p_value: f64,
    /// Diebold-Mariano only: p-value against `E[d] < 0`.
    pub p_value_less: Option<f64>,
    pub n_effective: usize,
    pub loss_kind: Option<DmLoss>,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

/// Mid-ranks of `x` (1-based), ties sharing the average rank.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Non-zero differences `e1 - e2`, their absolute mid-ranks and `W`.
fn signed_ranks(e1: &[f64], e2: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    check_pair(e1, e2)?;
    let d: Vec<f64> = e1.iter().zip(e2).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if d.is_empty() {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = mid_ranks(&abs);
    let w = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    Ok((d, ranks, w))
}

/// Signed-rank test on `d = e1 - e2` with zeros dropped and the normal
/// approximation (no tie or continuity correction).
pub fn wilcoxon_signed_rank(e1: &[f64], e2: &[f64]) -> Result<TestResult> {
    let (d, _, w) = signed_ranks(e1, e2)?;
    let n = d.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let sd = (n * (n + 1.0) * (2.0 * n + 1.0) / 24.0).sqrt();
    let z = (w - mean) / sd;
    Ok(TestResult {
        statistic: w,
        z_or_t: z,
        p_value: (2.0 * std_normal().sf(z.abs())).min(1.0),
        p_value_less: None,
        n_effective: d.len(),
        loss_kind: None,
    })
}

/// Exact null distribution of `W` for the given ranks: every sign pattern is
/// equally likely. Returns `(w, count)` pairs in increasing `w`; counts sum
/// to `2^n`. Ranks must be multiples of one half.
pub fn signed_rank_null(ranks: &[f64]) -> Result<Vec<(f64, u128)>> {
    if ranks.len() > 120 {
        return Err(Error::InvalidArgument("exact distribution limited to n <= 120".into()));
    }
    let doubled: Vec<usize> = ranks
        .iter()
        .map(|&r| {
            let d = 2.0 * r;
            if d >= 0.0 && d.fract() == 0.0 {
                Ok(d as usize)
            } else {
                Err(Error::InvalidArgument(format!("rank {r} is not a multiple of 1/2")))
            }
        })
        .collect::<Result<_>>()?;
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u128; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(s, c)| (s as f64 / 2.0, c))
        .collect())
}

/// Two-sided exact p-value: probability under the null of a `W` at least as
/// far from its mean as the observed one.
pub fn wilcoxon_exact_p_value(e1: &[f64], e2: &[f64]) -> Result<f64> {
    let (_, ranks, w) = signed_ranks(e1, e2)?;
    let dist = signed_rank_null(&ranks)?;
    let mean = ranks.iter().sum::<f64>() / 2.0;
    let dev = (w - mean).abs();
    let total: u128 = dist.iter().map(|(_, c)| c).sum();
    let extreme: u128 = dist
        .iter()
        .filter(|(v, _)| (v - mean).abs() >= dev - 1e-9)
        .map(|(_, c)| c)
        .sum();
    Ok(extreme as f64 / total as f64)
}

/// Diebold-Mariano options. `horizon` sets the Newey-West lag to
/// `horizon - 1` with Bartlett weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmOptions {
    pub horizon: usize,
    /// Harvey-Leybourne-Newbold small-sample correction with Student-t
    /// p-values on `n - 1` degrees of freedom.
    pub hln: bool,
}

impl Default for DmOptions {
    fn default() -> Self {
        Self {
            horizon: 1,
            hln: false,
        }
    }
}

pub const DM_MIN_LEN: usize = 10;

/// Newey-West long-run variance of `d` with Bartlett weights and
/// `lags` autocovariances; autocovariances use the `1/n` divisor.
pub fn long_run_variance(d: &[f64], lags: usize) -> f64 {
    let n = d.len();
    let mean = d.iter().sum::<f64>() / n as f64;
    let gamma = |k: usize| -> f64 {
        (k..n).map(|t| (d[t] - mean) * (d[t - k] - mean)).sum::<f64>() / n as f64
    };
    let mut v = gamma(0);
    for k in 1..=lags.min(n - 1) {
        v += 2.0 * (1.0 - k as f64 / (lags + 1) as f64) * gamma(k);
    }
    v
}

pub fn diebold_mariano(e1: &[f64], e2: &[f64], loss: DmLoss, options: DmOptions) -> Result<TestResult> {
    check_pair(e1, e2)?;
    if e1.len() < DM_MIN_LEN {
        return Err(Error::TooShort {
            needed: DM_MIN_LEN,
            got: e1.len(),
        });
    }
    if options.horizon == 0 {
        return Err(Error::InvalidArgument("forecast horizon must be at least 1".into()));
    }
    let d: Vec<f64> = e1.iter().zip(e2).map(|(a, b)| loss.apply(*a) - loss.apply(*b)).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let lrv = long_run_variance(&d, options.horizon - 1);
    if !(lrv > 0.0) {
        return Err(Error::Degenerate("loss differential has zero long-run variance".into()));
    }
    let mut dm = mean / (lrv / n).sqrt();
    let (p_two, p_less) = if options.hln {
        let h = options.horizon as f64;
        dm *= ((n + 1.0 - 2.0 * h + h * (h - 1.0) / n) / n).sqrt();
        let t = StudentsT::new(0.0, 1.0, n - 1.0).expect("valid parameters");
        (2.0 * t.sf(dm.abs()), t.cdf(dm))
    } else {
        let z = std_normal();
        (2.0 * z.sf(dm.abs()), z.cdf(dm))
    };
    Ok(TestResult {
        statistic: mean,
        z_or_t: dm,
        p_value: p_two.min(1.0),
        p_value_less: Some(p_less),
        n_effective: d.len(),
        loss_kind: Some(loss),
    })
}

/// One row of a pairwise comparison table. Degenerate tests are `None` and
/// explained in `notes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub comparison: String,
    pub wilcoxon_w: Option<f64>,
    pub wilcoxon_z: Option<f64>,
    pub wilcoxon_p: Option<f64>,
    pub dm_mse: Option<f64>,
    pub dm_mse_p: Option<f64>,
    pub dm_mse_p_less: Option<f64>,
    pub dm_mae: Option<f64>,
    pub dm_mae_p: Option<f64>,
    pub dm_mae_p_less: Option<f64>,
    pub notes: Vec<String>,
}

/// Compares model 1 against model 2 on the same actuals.
pub fn compare_pair(
    name: &str,
    y_true: &[f64],
    pred1: &[f64],
    pred2: &[f64],
    options: DmOptions,
) -> Result<ComparisonRow> {
    let e1 = errors(y_true, pred1)?;
    let e2 = errors(y_true, pred2)?;
    let mut row = ComparisonRow {
        comparison: name.to_string(),
        wilcoxon_w: None,
        wilcoxon_z: None,
        wilcoxon_p: None,
        dm_mse: None,
        dm_mse_p: None,
        dm_mse_p_less: None,
        dm_mae: None,
        dm_mae_p: None,
        dm_mae_p_less: None,
        notes: Vec::new(),
    };
    match wilcoxon_signed_rank(&e1, &e2) {
        Ok(t) => {
            row.wilcoxon_w = Some(t.statistic);
            row.wilcoxon_z = Some(t.z_or_t);
            row.wilcoxon_p = Some(t.p_value);
        }
        Err(Error::Degenerate(m)) => row.notes.push(format!("wilcoxon degenerate: {m}")),
        Err(e) => return Err(e),
    }
    for loss in [DmLoss::Squared, DmLoss::Absolute] {
        match diebold_mariano(&e1, &e2, loss, options) {
            Ok(t) => {
                let (s, p, pl) = match loss {
                    DmLoss::Squared => (&mut row.dm_mse, &mut row.dm_mse_p, &mut row.dm_mse_p_less),
                    DmLoss::Absolute => (&mut row.dm_mae, &mut row.dm_mae_p, &mut row.dm_mae_p_less),
                };
                *s = Some(t.z_or_t);
                *p = Some(t.p_value);
                *pl = t.p_value_less;
            }
            Err(Error::Degenerate(m)) => row.notes.push(format!("diebold-mariano {loss:?} degenerate: {m}")),
            Err(e) => return Err(e),
        }
    }
    Ok(row)
}

/// Per-model accuracy plus every pairwise comparison, earlier model first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n: usize,
    pub models: Vec<(String, MetricReport)>,
    pub comparisons: Vec<ComparisonRow>,
}

/// Requires identical dates and actuals across all series; the first
/// disagreement is reported by date.
pub fn compare_forecasts(series: &[(String, Vec<ForecastRow>)], options: DmOptions) -> Result<ComparisonReport> {
    if series.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two forecast series, got {}",
            series.len()
        )));
    }
    let (base_name, base) = &series[0];
    for (name, rows) in &series[1..] {
        if let Some((a, b)) = base.iter().zip(rows).find(|(a, b)| a.date != b.date) {
            return Err(Error::Misaligned(format!(
                "{name} has {} where {base_name} has {}",
                b.date, a.date
            )));
        }
        if rows.len() != base.len() {
            let longer = if rows.len() > base.len() { rows } else { base };
            let date = longer[base.len().min(rows.len())].date;
            return Err(Error::Misaligned(format!(
                "{name} has {} rows, {base_name} has {}; first unmatched date {date}",
                rows.len(),
                base.len()
            )));
        }
        if let Some((a, _)) = base.iter().zip(rows).find(|(a, b)| a.y_true != b.y_true) {
            return Err(Error::Misaligned(format!(
                "{name} and {base_name} disagree on the actual at {}",
                a.date
            )));
        }
    }
    let y_true: Vec<f64> = base.iter().map(|r| r.y_true).collect();
    let preds: Vec<Vec<f64>> = series.iter().map(|(_, r)| r.iter().map(|x| x.y_pred).collect()).collect();
    let models = series
        .iter()
        .zip(&preds)
        .map(|((name, _), p)| Ok((name.clone(), point_metrics(&y_true, p)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut comparisons = Vec::new();
    for i in 0..series.len() {
        for j in i + 1..series.len() {
            let name = format!("{} vs {}", series[i].0, series[j].0);
            comparisons.push(compare_pair(&name, &y_true, &preds[i], &preds[j], options)?);
        }
    }
    Ok(ComparisonReport {
        n: y_true.len(),
        models,
        comparisons,
    })
}

impl ComparisonReport {
    /// Plain-text tables: accuracy per model, then the pairwise tests.
    pub fn to_text(&self) -> String {
        fn cell(x: Option<f64>) -> String {
            x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
        }
        let mut out = String::new();
        let w = self.models.iter().map(|(n, _)| n.len()).max().unwrap_or(5).max(5);
        let _ = writeln!(out, "{:<w$}  {:>12}  {:>12}  {:>10}", "model", "MSE", "MAE", "MAPE%");
        for (name, m) in &self.models {
            let _ = writeln!(out, "{name:<w$}  {:>12.6e}  {:>12.6e}  {:>10.4}", m.mse, m.mae, m.mape_percent);
        }
        out.push('\n');
        let w = self.comparisons.iter().map(|r| r.comparison.len()).max().unwrap_or(10).max(10);
        let _ = writeln!(
            out,
            "{:<w$}  {:>12}  {:>8}  {:>9}  {:>8}  {:>9}  {:>8}",
            "comparison", "wilcoxon W", "p", "DM(MSE)", "p", "DM(MAE)", "p"
        );
        for r in &self.comparisons {
            let _ = writeln!(
                out,
                "{:<w$}  {:>12}  {:>8}  {:>9}  {:>8}  {:>9}  {:>8}",
                r.comparison,
                cell(r.wilcoxon_w),
                cell(r.wilcoxon_p),
                cell(r.dm_mse),
                cell(r.dm_mse_p),
                cell(r.dm_mae),
                cell(r.dm_mae_p)
            );
            for note in &r.notes {
                let _ = writeln!(out, "  note: {note}");
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        fn cell(x: Option<f64>) -> String {
            x.map_or(String::new(), |v| v.to_string())
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = [
            "comparison",
            "wilcoxon_w",
            "wilcoxon_z",
            "wilcoxon_p",
            "dm_mse",
            "dm_mse_p",
            "dm_mse_p_less",
            "dm_mae",
            "dm_mae_p",
            "dm_mae_p_less",
            "notes",
        ];
        // writing to a Vec cannot fail
        w.write_record(header).expect("in-memory write");
        for r in &self.comparisons {
            w.write_record([
                r.comparison.clone(),
                cell(r.wilcoxon_w),
                cell(r.wilcoxon_z),
                cell(r.wilcoxon_p),
                cell(r.dm_mse),
                cell(r.dm_mse_p),
                cell(r.dm_mse_p_less),
                cell(r.dm_mae),
                cell(r.dm_mae_p),
                cell(r.dm_mae_p_less),
                r.notes.join("; "),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn rows(preds: &[f64]) -> Vec<ForecastRow> {
        let d0 = chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        preds
            .iter()
            .enumerate()
            .map(|(i, &p)| ForecastRow {
                date: d0 + chrono::Days::new(i as u64),
                y_true: 1.0 + (i % 3) as f64,
                y_pred: p,
            })
            .collect()
    }

    #[test]
    fn report_over_three_series() {
        let a: Vec<f64> = (0..30).map(|i| 1.0 + (i % 3) as f64 + 0.1).collect();
        let b: Vec<f64> = (0..30).map(|i| 1.0 + (i % 3) as f64 - 0.2 * ((i % 2) as f64)).collect();
        let c: Vec<f64> = (0..30).map(|i| 1.5 + (i % 5) as f64 * 0.1).collect();
        let series = vec![("a".to_string(), rows(&a)), ("b".to_string(), rows(&b)), ("c".to_string(), rows(&c))];
        let report = compare_forecasts(&series, DmOptions::default()).unwrap();
        assert_eq!(report.comparisons.len(), 3);
        assert_eq!(report.comparisons[2].comparison, "b vs c");
        assert!((report.models[0].1.mse - 0.01).abs() < 1e-12);
        assert!((report.models[0].1.mae - 0.1).abs() < 1e-12);
        assert_eq!(report.to_csv().lines().count(), 4);
        assert!(report.to_text().contains("a vs b"));

        let same = vec![("a".to_string(), rows(&a)), ("a2".to_string(), rows(&a))];
        let report = compare_forecasts(&same, DmOptions::default()).unwrap();
        assert_eq!(report.models[0].1, report.models[1].1);
        assert!(report.comparisons[0].wilcoxon_p.is_none());
        assert_eq!(report.comparisons[0].notes.len(), 3);
    }

    #[test]
    fn report_names_first_misaligned_date() {
        let mut shifted = rows(&[1.0; 12]);
        shifted[4].date = shifted[4].date + chrono::Days::new(100);
        let series = vec![("a".to_string(), rows(&[1.0; 12])), ("b".to_string(), shifted)];
        let msg = compare_forecasts(&series, DmOptions::default()).unwrap_err().to_string();
        assert!(msg.contains("2020-01-05"), "{msg}");
        let short = vec![("a".to_string(), rows(&[1.0; 12])), ("b".to_string(), rows(&[1.0; 10]))];
        let msg = compare_forecasts(&short, DmOptions::default()).unwrap_err().to_string();
        assert!(msg.contains("2020-01-11"), "{msg}");
        assert!(compare_forecasts(&short[..1], DmOptions::default()).is_err());
    }

    #[test]
    fn metric_examples() {
        let m = point_metrics(&[1.0, 2.0], &[2.0, 2.0]).unwrap();
        assert_eq!((m.mse, m.mae, m.mape_percent, m.n), (0.5, 0.5, 50.0, 2));
        let z = point_metrics(&[1.0, 3.0], &[1.0, 3.0]).unwrap();
        assert_eq!((z.mse, z.mae, z.mape_percent), (0.0, 0.0, 0.0));
        assert!(matches!(point_metrics(&[1.0, 0.0], &[1.0, 1.0]), Err(Error::ZeroActual(1))));
        assert!(point_metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(point_metrics(&[], &[]).is_err());
    }

    #[test]
    fn wilcoxon_hand_example() {
        // d = [1, -2, 3]
        let t = wilcoxon_signed_rank(&[1.0, 0.0, 3.0], &[0.0, 2.0, 0.0]).unwrap();
        assert_eq!(t.statistic, 4.0);
        assert!((t.z_or_t - 1.0 / 3.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(t.n_effective, 3);
        assert!(matches!(
            wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn mid_rank_ties() {
        assert_eq!(mid_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    /// Brute force over all 2^n sign patterns with an independent ranking.
    fn enumerate(abs: &[f64]) -> std::collections::BTreeMap<i64, u128> {
        let n = abs.len();
        let ranks: Vec<f64> = abs
            .iter()
            .map(|&a| {
                let below = abs.iter().filter(|&&b| b < a).count() as f64;
                let equal = abs.iter().filter(|&&b| b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect();
        let mut hist = std::collections::BTreeMap::new();
        for mask in 0u32..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            *hist.entry((2.0 * w) as i64).or_insert(0) += 1;
        }
        hist
    }

    #[test]
    fn exact_null_matches_enumeration() {
        let mut rng = rng_from(8);
        for n in 1..=10 {
            for _ in 0..5 {
                // integer magnitudes produce ties
                let abs: Vec<f64> = (0..n).map(|_| rng.random_range(1..6) as f64).collect();
                let ranks = mid_ranks(&abs);
                let dp = signed_rank_null(&ranks).unwrap();
                let brute = enumerate(&abs);
                let dp_map: std::collections::BTreeMap<i64, u128> =
                    dp.iter().map(|(w, c)| ((2.0 * w) as i64, *c)).collect();
                assert_eq!(dp_map, brute);
                assert_eq!(dp.iter().map(|(_, c)| c).sum::<u128>(), 1u128 << n);
            }
        }
    }

    #[test]
    fn exact_p_value_small_case() {
        // n = 3, W = 6 is the single most extreme pattern on each side
        let p = wilcoxon_exact_p_value(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p, 2.0 / 8.0);
    }

    #[test]
    fn dm_reduces_to_mean_over_stderr() {
        let mut rng = rng_from(3);
        let e1: Vec<f64> = (0..20).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let e2: Vec<f64> = (0..20).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let t = diebold_mariano(&e1, &e2, DmLoss::Squared, DmOptions::default()).unwrap();
        let d: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| a * a - b * b).collect();
        let mean = d.iter().sum::<f64>() / 20.0;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 20.0;
        let expect = mean / (var / 20.0).sqrt();
        assert!((t.z_or_t - expect).abs() < 1e-12);
        assert!((t.statistic - mean).abs() < 1e-15);
        let swapped = diebold_mariano(&e2, &e1, DmLoss::Squared, DmOptions::default()).unwrap();
        assert_eq!(swapped.z_or_t, -t.z_or_t);
        let p = t.p_value_less.unwrap();
        assert!((p + swapped.p_value_less.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dm_guards() {
        let e = vec![0.5; 12];
        assert!(matches!(
            diebold_mariano(&e, &e, DmLoss::Absolute, DmOptions::default()),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            diebold_mariano(&e[..5], &e[..5], DmLoss::Absolute, DmOptions::default()),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn dm_long_run_variance_with_lags() {
        let d = [1.0, -1.0, 2.0, 0.0, -2.0];
        // mean 0; gamma0 = 10/5, gamma1 = (-1 - 2 + 0 + 0)/5
        let v = long_run_variance(&d, 1);
        assert!((v - (2.0 + 2.0 * 0.5 * (-3.0 / 5.0))).abs() < 1e-15);
        let mut rng = rng_from(4);
        let e1: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e2: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hln = DmOptions { horizon: 2, hln: true };
        let t = diebold_mariano(&e1, &e2, DmLoss::Absolute, hln).unwrap();
        assert!((0.0..=1.0).contains(&t.p_value));
    }

    #[test]
    fn comparison_row_flags_degenerate() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        let p = [1.5, 2.0, 2.5, 4.5, 5.0, 6.5, 6.0, 8.0, 9.5, 9.0];
        let row = compare_pair("a vs a", &y, &p, &p, DmOptions::default()).unwrap();
        assert!(row.wilcoxon_w.is_none() && row.dm_mse.is_none() && row.dm_mae.is_none());
        assert_eq!(row.notes.len(), 3);
    }

    proptest! {
        #[test]
        fn metrics_permutation_invariant(
            pairs in prop::collection::vec((0.1f64..10.0, -10.0f64..10.0), 1..30),
            seed in 0u64..100,
        ) {
            use rand::seq::SliceRandom;
            let (y, p): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rng_from(seed));
            let (ys, ps): (Vec<f64>, Vec<f64>) = shuffled.into_iter().unzip();
            let a = point_metrics(&y, &p).unwrap();
            let b = point_metrics(&ys, &ps).unwrap();
            prop_assert!((a.mse - b.mse).abs() <= 1e-12 * (1.0 + a.mse));
            prop_assert!((a.mae - b.mae).abs() <= 1e-12 * (1.0 + a.mae));
            prop_assert!((a.mape_percent - b.mape_percent).abs() <= 1e-10 * (1.0 + a.mape_percent));
        }

        #[test]
        fn wilcoxon_scale_invariant(
            d in prop::collection::vec(-5.0f64..5.0, 2..40),
            c in 0.01f64..100.0,
        ) {
            let zeros = vec![0.0; d.len()];
            let scaled: Vec<f64> = d.iter().map(|x| x * c).collect();
            match (wilcoxon_signed_rank(&d, &zeros), wilcoxon_signed_rank(&scaled, &zeros)) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a.statistic, b.statistic);
                    prop_assert_eq!(a.z_or_t, b.z_or_t);
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "degeneracy changed under scaling"),
            }
        }

        #[test]
        fn dm_depends_on_loss_differences_only(
            base in prop::collection::vec(-2.0f64..2.0, 12..30),
            flip in prop::collection::vec(any::<bool>(), 30),
        ) {
            let e2: Vec<f64> = base.iter().map(|x| x * 0.5 + 0.1).collect();
            // flipping signs leaves squared and absolute losses unchanged
            let e1_flipped: Vec<f64> = base.iter().zip(&flip).map(|(x, f)| if *f { -x } else { *x }).collect();
            for loss in [DmLoss::Squared, DmLoss::Absolute] {
                let a = diebold_mariano(&base, &e2, loss, DmOptions::default());
                let b = diebold_mariano(&e1_flipped, &e2, loss, DmOptions::default());
                match (a, b) {
                    (Ok(a), Ok(b)) => prop_assert_eq!(a.z_or_t, b.z_or_t),
                    (Err(_), Err(_)) => {}
                    _ => prop_assert!(false),
                }
            }
        }
    }
}
