//! Per-column feature scalers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::median_of_sorted;
use crate::svmodel::quantile_sorted;

/// Lower bound of the min-max range.
pub const MINMAX_EPSILON: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    Minmax,
    Standard,
    Robust,
}

impl std::str::FromStr for ScalerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "minmax" => Ok(ScalerKind::Minmax),
            "standard" => Ok(ScalerKind::Standard),
            "robust" => Ok(ScalerKind::Robust),
            other => Err(Error::InvalidArgument(format!("unknown scaler {other:?}"))),
        }
    }
}

/// Fitted per-column parameters: `(min, max)`, `(mean, std)` or
/// `(median, iqr)` depending on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub kind: ScalerKind,
    pub params: Vec<(f64, f64)>,
}

fn column(rows: &[Vec<f64>], c: usize) -> Vec<f64> {
    rows.iter().map(|r| r[c]).collect()
}

/// Fits one scaler per column of `rows`.
pub fn fit_scaler(kind: ScalerKind, rows: &[Vec<f64>]) -> Result<Scaler> {
    if rows.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: rows.len(),
        });
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Shape("scaler rows must share a positive width".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in scaler input".into()));
    }
    let params = (0..cols)
        .map(|c| {
            let x = column(rows, c);
            let n = x.len() as f64;
            match kind {
                ScalerKind::Minmax => {
                    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    if hi == lo {
                        return Err(Error::Degenerate(format!("column {c} is constant")));
                    }
                    Ok((lo, hi))
                }
                ScalerKind::Standard => {
                    let mean = x.iter().sum::<f64>() / n;
                    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    if var == 0.0 {
                        return Err(Error::Degenerate(format!("column {c} has zero variance")));
                    }
                    Ok((mean, var.sqrt()))
                }
                ScalerKind::Robust => {
                    let mut s = x;
                    s.sort_by(f64::total_cmp);
                    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
                    // a zero IQR leaves the column merely centred
                    Ok((median_of_sorted(&s), if iqr > 0.0 { iqr } else { 1.0 }))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Scaler { kind, params })
}

impl Scaler {
    pub fn width(&self) -> usize {
        self.params.len()
    }

    pub fn transform_value(&self, c: usize, x: f64) -> f64 {
        let (a, b) = self.params[c];
        match self.kind {
            ScalerKind::Minmax => (x - a) / (b - a) * (1.0 - MINMAX_EPSILON) + MINMAX_EPSILON,
            ScalerKind::Standard | ScalerKind::Robust => (x - a) / b,
        }
    }

    pub fn inverse_value(&self, c: usize, s: f64) -> f64 {
        let (a, b) = self.params[c];
        match self.kind {
            ScalerKind::Minmax => (s - MINMAX_EPSILON) / (1.0 - MINMAX_EPSILON) * (b - a) + a,
            ScalerKind::Standard | ScalerKind::Robust => s * b + a,
        }
    }

    fn check(&self, rows: &[Vec<f64>]) -> Result<()> {
        match rows.iter().find(|r| r.len() != self.width()) {
            Some(r) => Err(Error::Shape(format!(
                "row of width {} for a scaler of width {}",
                r.len(),
                self.width()
            ))),
            None => Ok(()),
        }
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check(rows)?;
        Ok(rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(c, &x)| self.transform_value(c, x)).collect())
            .collect())
    }

    pub fn inverse_transform(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check(rows)?;
        Ok(rows
            .iter()
            .map(|r| r.iter().enumerate().map(|(c, &x)| self.inverse_value(c, x)).collect())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn minmax_extremes() {
        let rows = col(&[3.0, -1.5, 7.25, 0.0]);
        let s = fit_scaler(ScalerKind::Minmax, &rows).unwrap();
        assert_eq!(s.transform_value(0, 7.25), 1.0);
        assert_eq!(s.transform_value(0, -1.5), MINMAX_EPSILON);
    }

    #[test]
    fn standard_definition() {
        let s = fit_scaler(ScalerKind::Standard, &col(&[1.0, 2.0, 3.0])).unwrap();
        let t: Vec<f64> = s.transform(&col(&[1.0, 2.0, 3.0])).unwrap().concat();
        assert_eq!(t, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn robust_definition() {
        let s = fit_scaler(ScalerKind::Robust, &col(&[1.0, 2.0, 3.0, 4.0, 100.0])).unwrap();
        // median 3, quartiles 2 and 4
        assert_eq!(s.params, vec![(3.0, 2.0)]);
        let flat = fit_scaler(ScalerKind::Robust, &col(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(flat.transform_value(0, 6.0), 1.0);
    }

    #[test]
    fn degenerate_columns() {
        let rows = vec![vec![1.0, 2.0], vec![1.0, 3.0]];
        assert!(matches!(fit_scaler(ScalerKind::Minmax, &rows), Err(Error::Degenerate(_))));
        assert!(matches!(fit_scaler(ScalerKind::Standard, &rows), Err(Error::Degenerate(_))));
        assert!(fit_scaler(ScalerKind::Minmax, &col(&[1.0])).is_err());
        let s = fit_scaler(ScalerKind::Minmax, &col(&[1.0, 2.0])).unwrap();
        assert!(s.transform(&[vec![1.0, 2.0]]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(
            kind in prop_oneof![Just(ScalerKind::Minmax), Just(ScalerKind::Standard), Just(ScalerKind::Robust)],
            rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 4..40),
        ) {
            let s = match fit_scaler(kind, &rows) {
                Ok(s) => s,
                Err(Error::Degenerate(_)) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            let back = s.inverse_transform(&s.transform(&rows).unwrap()).unwrap();
            for (a, b) in rows.iter().flatten().zip(back.iter().flatten()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{} vs {}", a, b);
            }
        }
    }
}
