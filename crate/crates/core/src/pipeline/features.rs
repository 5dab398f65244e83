//! Model inputs aligned by date: the row dated `t` holds information known at
//! the close of `t` and targets the rolling volatility of the next row.

use std::collections::HashMap;
use std::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::scaler::Scaler;
use crate::error::{Error, Result};
use crate::marketdata::{ReturnSeries, VolSeries};
use crate::neuralnet::{Matrix, Sample};
use crate::svmodel::SvForecast;

pub const RETURN_COLUMN: &str = "log_return";
pub const SV_COLUMN: &str = "sv_forecast_t_plus_1";

pub fn vol_column(window: usize) -> String {
    format!("rolling_vol_{window}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Rolling volatility at the row date.
    pub current: Vec<f64>,
    /// Rolling volatility at the next row.
    pub target: Vec<f64>,
    pub target_dates: Vec<NaiveDate>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn slice(&self, rows: Range<usize>) -> FeatureMatrix {
        FeatureMatrix {
            dates: self.dates[rows.clone()].to_vec(),
            columns: self.columns.clone(),
            values: self.values[rows.clone()].to_vec(),
            current: self.current[rows.clone()].to_vec(),
            target: self.target[rows.clone()].to_vec(),
            target_dates: self.target_dates[rows].to_vec(),
        }
    }

    pub fn drop_column(&self, name: &str) -> Result<FeatureMatrix> {
        let c = self
            .column_index(name)
            .ok_or_else(|| Error::Missing(format!("feature column {name}")))?;
        let mut out = self.clone();
        out.columns.remove(c);
        for row in &mut out.values {
            row.remove(c);
        }
        Ok(out)
    }

    /// Rows dated on or after `date`.
    pub fn from_date(&self, date: NaiveDate) -> FeatureMatrix {
        let start = self.dates.partition_point(|d| *d < date);
        self.slice(start..self.len())
    }

    /// Scales feature columns with `features` and the volatility columns
    /// (`current`, `target`) with the single-column `target` scaler.
    pub fn scaled(&self, features: &Scaler, target: &Scaler) -> Result<FeatureMatrix> {
        if target.width() != 1 {
            return Err(Error::Shape("target scaler must have one column".into()));
        }
        Ok(FeatureMatrix {
            values: features.transform(&self.values)?,
            current: self.current.iter().map(|&v| target.transform_value(0, v)).collect(),
            target: self.target.iter().map(|&v| target.transform_value(0, v)).collect(),
            ..self.clone()
        })
    }

    /// Current-volatility column as single-value rows, for fitting the target
    /// scaler.
    pub fn current_rows(&self) -> Vec<Vec<f64>> {
        self.current.iter().map(|&v| vec![v]).collect()
    }
}

struct Aligned<'a> {
    returns: &'a ReturnSeries,
    vol_by_date: HashMap<NaiveDate, f64>,
}

impl<'a> Aligned<'a> {
    fn new(returns: &'a ReturnSeries, vol: &VolSeries) -> Self {
        Self {
            returns,
            vol_by_date: vol.dates().iter().copied().zip(vol.values().iter().copied()).collect(),
        }
    }

    /// `(t, r_t, v_t, next date, v_next)` for every return row with both
    /// volatilities available.
    fn rows(&self) -> impl Iterator<Item = (usize, f64, f64, NaiveDate, f64)> + '_ {
        let dates = self.returns.dates();
        let r = self.returns.returns();
        (0..dates.len().saturating_sub(1)).filter_map(move |t| {
            let v = *self.vol_by_date.get(&dates[t])?;
            let next = dates[t + 1];
            let v_next = *self.vol_by_date.get(&next)?;
            Some((t, r[t], v, next, v_next))
        })
    }
}

fn build(
    rows: Vec<(NaiveDate, Vec<f64>, f64, NaiveDate, f64)>,
    columns: Vec<String>,
) -> Result<FeatureMatrix> {
    if rows.is_empty() {
        return Err(Error::Misaligned("no date has every feature and a next-day target".into()));
    }
    let mut fm = FeatureMatrix {
        dates: Vec::with_capacity(rows.len()),
        columns,
        values: Vec::with_capacity(rows.len()),
        current: Vec::with_capacity(rows.len()),
        target: Vec::with_capacity(rows.len()),
        target_dates: Vec::with_capacity(rows.len()),
    };
    for (d, x, v, nd, nv) in rows {
        fm.dates.push(d);
        fm.values.push(x);
        fm.current.push(v);
        fm.target_dates.push(nd);
        fm.target.push(nv);
    }
    Ok(fm)
}

/// `(log_return_t, rolling_vol_t)` rows.
pub fn assemble_lstm_features(returns: &ReturnSeries, vol: &VolSeries) -> Result<FeatureMatrix> {
    let a = Aligned::new(returns, vol);
    let rows = a
        .rows()
        .map(|(t, r, v, nd, nv)| (returns.dates()[t], vec![r, v], v, nd, nv))
        .collect();
    build(rows, vec![RETURN_COLUMN.into(), vol_column(vol.window())])
}

/// `(log_return_t, rolling_vol_t, sv_forecast dated at the next row)` rows.
pub fn assemble_hybrid_features(
    returns: &ReturnSeries,
    vol: &VolSeries,
    sv: &[SvForecast],
) -> Result<FeatureMatrix> {
    let sv_by_date: HashMap<NaiveDate, f64> = sv.iter().map(|f| (f.date, f.median_vol)).collect();
    let a = Aligned::new(returns, vol);
    let rows = a
        .rows()
        .filter_map(|(t, r, v, nd, nv)| {
            let s = *sv_by_date.get(&nd)?;
            Some((returns.dates()[t], vec![r, v, s], v, nd, nv))
        })
        .collect();
    build(rows, vec![RETURN_COLUMN.into(), vol_column(vol.window()), SV_COLUMN.into()])
}

/// Sequence `k` reads rows `[k, k + lookback)` and targets the volatility at
/// row `k + lookback`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequences {
    pub inputs: Vec<Matrix>,
    pub targets: Vec<f64>,
    pub target_dates: Vec<NaiveDate>,
    /// Volatility at the last input row.
    pub references: Vec<f64>,
}

impl Sequences {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn samples(&self) -> Vec<Sample> {
        self.inputs
            .iter()
            .zip(&self.targets)
            .zip(&self.references)
            .map(|((x, &y), &r)| Sample {
                input: x.clone(),
                target: y,
                reference: r,
            })
            .collect()
    }
}

pub fn make_sequences(features: &FeatureMatrix, lookback: usize) -> Result<Sequences> {
    if lookback == 0 {
        return Err(Error::InvalidArgument("lookback must be at least 1".into()));
    }
    let n = features.len();
    if n < lookback + 1 {
        return Err(Error::TooShort {
            needed: lookback + 1,
            got: n,
        });
    }
    let count = n - lookback;
    let width = features.width();
    let mut seq = Sequences {
        inputs: Vec::with_capacity(count),
        targets: Vec::with_capacity(count),
        target_dates: Vec::with_capacity(count),
        references: Vec::with_capacity(count),
    };
    for k in 0..count {
        let last = k + lookback - 1;
        let data = features.values[k..=last].concat();
        seq.inputs.push(Matrix::from_vec(lookback, width, data)?);
        seq.targets.push(features.target[last]);
        seq.target_dates.push(features.target_dates[last]);
        seq.references.push(features.current[last]);
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::{log_returns, rolling_volatility, PriceSeries};
    use crate::seed::rng_from;
    use proptest::prelude::*;
    use rand::Rng;

    fn day(i: usize) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(i as u64)
    }

    fn series(n: usize, seed: u64) -> (ReturnSeries, VolSeries) {
        let mut rng = rng_from(seed);
        let mut p = 100.0;
        let closes: Vec<f64> = (0..n)
            .map(|_| {
                p *= (rng.random_range(-0.02..0.02f64)).exp();
                p
            })
            .collect();
        let prices = PriceSeries::new((0..n).map(day).collect(), closes).unwrap();
        let r = log_returns(&prices).unwrap();
        let v = rolling_volatility(&r, 3).unwrap();
        (r, v)
    }

    #[test]
    fn hand_aligned_fixture() {
        // 10 returns, window 3: vol exists from return row 2 onwards
        let (r, v) = series(11, 1);
        let sv: Vec<SvForecast> = (5..10)
            .map(|i| SvForecast {
                date: r.dates()[i],
                median_vol: 0.1 * i as f64,
                quantiles: vec![],
            })
            .collect();
        let fm = assemble_hybrid_features(&r, &v, &sv).unwrap();
        // rows t = 4..=8: the next row must carry an SV forecast
        assert_eq!(fm.dates, r.dates()[4..9].to_vec());
        for (k, t) in (4..9).enumerate() {
            let vt = v.values()[t - 2];
            let vn = v.values()[t - 1];
            assert_eq!(fm.values[k], vec![r.returns()[t], vt, 0.1 * (t + 1) as f64]);
            assert_eq!(fm.current[k], vt);
            assert_eq!(fm.target[k], vn);
            assert_eq!(fm.target_dates[k], r.dates()[t + 1]);
        }
        assert_eq!(fm.columns, vec!["log_return", "rolling_vol_3", "sv_forecast_t_plus_1"]);
    }

    #[test]
    fn dropping_sv_gives_plain_features() {
        let (r, v) = series(60, 2);
        let sv: Vec<SvForecast> = r.dates()[20..]
            .iter()
            .map(|&d| SvForecast {
                date: d,
                median_vol: 0.01,
                quantiles: vec![],
            })
            .collect();
        let hybrid = assemble_hybrid_features(&r, &v, &sv).unwrap();
        let plain = assemble_lstm_features(&r, &v).unwrap();
        assert_eq!(hybrid.drop_column(SV_COLUMN).unwrap(), plain.from_date(hybrid.dates[0]));
    }

    #[test]
    fn no_overlap_is_an_error() {
        let (r, v) = series(30, 3);
        assert!(matches!(assemble_hybrid_features(&r, &v, &[]), Err(Error::Misaligned(_))));
    }

    #[test]
    fn sequence_counting() {
        let (r, v) = series(40, 4);
        let fm = assemble_lstm_features(&r, &v).unwrap().slice(0..22);
        let s = make_sequences(&fm, 21).unwrap();
        assert_eq!(s.len(), 1);
        assert!(make_sequences(&fm, 22).is_err());
        assert!(make_sequences(&fm, 0).is_err());
    }

    proptest! {
        #[test]
        fn sequences_match_index_oracle(n in 8usize..60, lookback in 1usize..6, seed in 0u64..1000) {
            let (r, v) = series(n + 4, seed);
            let fm = assemble_lstm_features(&r, &v).unwrap();
            prop_assume!(fm.len() > lookback);
            let s = make_sequences(&fm, lookback).unwrap();
            prop_assert_eq!(s.len(), fm.len() - lookback);
            for k in 0..s.len() {
                for i in 0..lookback {
                    prop_assert_eq!(s.inputs[k].row(i), &fm.values[k + i][..]);
                }
                // the target is the volatility observed at row k + lookback
                prop_assert_eq!(s.targets[k], fm.current[k + lookback]);
                prop_assert_eq!(s.target_dates[k], fm.dates[k + lookback]);
                prop_assert!(s.target_dates[k] > fm.dates[k + lookback - 1]);
                if k > 0 {
                    prop_assert!(s.target_dates[k] > s.target_dates[k - 1]);
                }
            }
        }
    }
}
