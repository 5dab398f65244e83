//! Dated price ingestion and the return / volatility series derived from it.
//!
//! All window arithmetic is in rows (trading days), never calendar days.

use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

pub(crate) fn parse_date(field: &str, line: u64) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(field.trim(), DATE_FORMAT).map_err(|e| Error::Malformed {
        line,
        message: format!("bad date {field:?}: {e}"),
    })
}

pub(crate) fn parse_number(field: &str, what: &str, line: u64) -> Result<f64> {
    let value: f64 = field.trim().parse().map_err(|_| Error::Malformed {
        line,
        message: format!("bad {what} {field:?}"),
    })?;
    if !value.is_finite() {
        return Err(Error::Malformed {
            line,
            message: format!("non-finite {what} {field:?}"),
        });
    }
    Ok(value)
}

fn ensure_increasing(dates: &[NaiveDate]) -> Result<()> {
    for pair in dates.windows(2) {
        if pair[1] <= pair[0] {
            return Err(if pair[1] == pair[0] {
                Error::DuplicateDate(pair[0])
            } else {
                Error::Misaligned(format!("dates out of order at {}", pair[1]))
            });
        }
    }
    Ok(())
}

/// Header names for the date and close columns of a price file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceColumns {
    pub date: String,
    pub close: String,
}

impl Default for PriceColumns {
    fn default() -> Self {
        Self {
            date: "date".into(),
            close: "close".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        if dates.len() != closes.len() {
            return Err(Error::LengthMismatch {
                left: dates.len(),
                right: closes.len(),
            });
        }
        ensure_increasing(&dates)?;
        if let Some((i, &c)) = closes.iter().enumerate().find(|(_, &c)| !(c > 0.0)) {
            return Err(Error::NonPositivePrice {
                line: i as u64 + 2,
                value: c,
            });
        }
        Ok(Self { dates, closes })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    dates: Vec<NaiveDate>,
    returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(dates: Vec<NaiveDate>, returns: Vec<f64>) -> Result<Self> {
        if dates.len() != returns.len() {
            return Err(Error::LengthMismatch {
                left: dates.len(),
                right: returns.len(),
            });
        }
        ensure_increasing(&dates)?;
        Ok(Self { dates, returns })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// Trailing-window sample standard deviation of log returns, per-day units.
#[derive(Debug, Clone, PartialEq)]
pub struct VolSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
    window: usize,
}

impl VolSeries {
    /// Builds a series from already-computed values (forecasts, external files).
    pub fn from_parts(dates: Vec<NaiveDate>, values: Vec<f64>, window: usize) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: dates.len(),
                right: values.len(),
            });
        }
        ensure_increasing(&dates)?;
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("negative volatility {v}")));
        }
        Ok(Self {
            dates,
            values,
            window,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Parses a price CSV. Rows are sorted by date on return; duplicate dates,
/// missing fields and non-positive closes are rejected with their line number.
pub fn parse_prices<R: Read>(reader: R, columns: &PriceColumns) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Malformed {
                line: 1,
                message: format!("missing column {name:?}"),
            })
    };
    let date_col = find(&columns.date)?;
    let close_col = find(&columns.close)?;

    let mut rows: Vec<(NaiveDate, f64, u64)> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |col: usize| {
            record
                .get(col)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::Malformed {
                    line,
                    message: "missing field".into(),
                })
        };
        let date = parse_date(field(date_col)?, line)?;
        let close = parse_number(field(close_col)?, "close", line)?;
        if close <= 0.0 {
            return Err(Error::NonPositivePrice { line, value: close });
        }
        rows.push((date, close, line));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(pair) = rows.windows(2).find(|p| p[0].0 == p[1].0) {
        return Err(Error::DuplicateDate(pair[0].0));
    }
    let (dates, closes) = rows.into_iter().map(|(d, c, _)| (d, c)).unzip();
    Ok(PriceSeries { dates, closes })
}

pub fn load_prices(path: impl AsRef<Path>, columns: &PriceColumns) -> Result<PriceSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_prices(std::io::BufReader::new(file), columns)
}

pub fn log_returns(prices: &PriceSeries) -> Result<ReturnSeries> {
    if prices.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: prices.len(),
        });
    }
    let returns = prices
        .closes
        .windows(2)
        .map(|w| (w[1] / w[0]).ln())
        .collect();
    Ok(ReturnSeries {
        dates: prices.dates[1..].to_vec(),
        returns,
    })
}

/// Sample standard deviation (N-1 denominator) of each trailing window.
pub fn rolling_volatility(returns: &ReturnSeries, window: usize) -> Result<VolSeries> {
    if window < 2 {
        return Err(Error::InvalidArgument(format!(
            "volatility window must be at least 2, got {window}"
        )));
    }
    if returns.len() < window {
        return Err(Error::TooShort {
            needed: window,
            got: returns.len(),
        });
    }
    let n = window as f64;
    let values = returns
        .returns
        .windows(window)
        .map(|w| {
            let mean = w.iter().sum::<f64>() / n;
            let ss: f64 = w.iter().map(|r| (r - mean).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        })
        .collect();
    Ok(VolSeries {
        dates: returns.dates[window - 1..].to_vec(),
        values,
        window,
    })
}

pub(crate) fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Summary moments. Skewness and excess kurtosis are the moment ratios
/// m3/m2^1.5 and m4/m2^2 - 3 of the central moments.
pub fn describe(x: &[f64]) -> Result<DescriptiveStats> {
    if x.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: x.len(),
        });
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite value {v}")));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let std_dev = (m2 / (n - 1.0)).sqrt();
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if m2 == 0.0 {
        return Err(Error::Degenerate(
            "constant series: skewness and kurtosis undefined".into(),
        ));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(DescriptiveStats {
        count: x.len(),
        mean,
        median: median_of_sorted(&sorted),
        std_dev,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    })
}
