//! CSV formats for forecast series.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::{parse_date, parse_number, DATE_FORMAT};
use crate::svmodel::SvForecast;

pub const FORECAST_HEADER: [&str; 3] = ["date", "y_true", "y_pred"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub date: NaiveDate,
    pub y_true: f64,
    pub y_pred: f64,
}

pub fn forecasts_to_csv(rows: &[ForecastRow]) -> String {
    let mut out = FORECAST_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.date.format(DATE_FORMAT), r.y_true, r.y_pred);
    }
    out
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input)
}

fn check_increasing(dates: impl Iterator<Item = (u64, NaiveDate)>) -> Result<()> {
    let mut prev: Option<NaiveDate> = None;
    for (line, d) in dates {
        if let Some(p) = prev {
            if d == p {
                return Err(Error::DuplicateDate(d));
            }
            if d < p {
                return Err(Error::Malformed {
                    line,
                    message: format!("date {d} is earlier than {p}"),
                });
            }
        }
        prev = Some(d);
    }
    Ok(())
}

/// Parses `date,y_true,y_pred` with strictly increasing dates.
pub fn parse_forecasts<R: Read>(input: R) -> Result<Vec<ForecastRow>> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != FORECAST_HEADER {
        return Err(Error::Malformed {
            line: 1,
            message: format!("expected header {}", FORECAST_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(Error::Malformed {
                line,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        rows.push(ForecastRow {
            date: parse_date(&rec[0], line)?,
            y_true: parse_number(&rec[1], "y_true", line)?,
            y_pred: parse_number(&rec[2], "y_pred", line)?,
        });
        lines.push(line);
    }
    check_increasing(lines.into_iter().zip(rows.iter().map(|r| r.date)))?;
    Ok(rows)
}

pub fn load_forecasts(path: &Path) -> Result<Vec<ForecastRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_forecasts(file)
}

/// Column label for quantile level `p`: `0.05 -> q05`, `0.975 -> q97.5`.
pub fn quantile_label(p: f64) -> String {
    let pct = 100.0 * p;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("q{:02}", pct.round() as u64)
    } else {
        format!("q{pct}")
    }
}

fn parse_quantile_label(label: &str, line: u64) -> Result<f64> {
    label
        .strip_prefix('q')
        .and_then(|s| s.parse::<f64>().ok())
        .map(|pct| pct / 100.0)
        .filter(|p| (0.0..=1.0).contains(p))
        .ok_or_else(|| Error::Malformed {
            line,
            message: format!("bad quantile column {label:?}"),
        })
}

/// `date,median_vol,q..` with one column per quantile level of the first row.
pub fn sv_forecasts_to_csv(rows: &[SvForecast]) -> String {
    let mut out = String::from("date,median_vol");
    if let Some(first) = rows.first() {
        for (p, _) in &first.quantiles {
            out.push(',');
            out.push_str(&quantile_label(*p));
        }
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{}", r.date.format(DATE_FORMAT), r.median_vol);
        for (_, v) in &r.quantiles {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_sv_forecasts<R: Read>(input: R) -> Result<Vec<SvForecast>> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "date" || &headers[1] != "median_vol" {
        return Err(Error::Malformed {
            line: 1,
            message: "expected header date,median_vol[,q..]".into(),
        });
    }
    let levels = headers
        .iter()
        .skip(2)
        .map(|h| parse_quantile_label(h, 1))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(Error::Malformed {
                line,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let median_vol = parse_number(&rec[1], "median_vol", line)?;
        if median_vol < 0.0 {
            return Err(Error::Malformed {
                line,
                message: format!("negative volatility {median_vol}"),
            });
        }
        let quantiles = levels
            .iter()
            .zip(rec.iter().skip(2))
            .map(|(&p, f)| parse_number(f, "quantile", line).map(|v| (p, v)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(SvForecast {
            date: parse_date(&rec[0], line)?,
            median_vol,
            quantiles,
        });
        lines.push(line);
    }
    check_increasing(lines.into_iter().zip(rows.iter().map(|r| r.date)))?;
    Ok(rows)
}

pub fn load_sv_forecasts(path: &Path) -> Result<Vec<SvForecast>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_sv_forecasts(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, DATE_FORMAT).unwrap()
    }

    #[test]
    fn forecast_round_trip() {
        let rows = vec![
            ForecastRow {
                date: d("2020-01-02"),
                y_true: 0.1 + 0.2,
                y_pred: 1e-7,
            },
            ForecastRow {
                date: d("2020-01-03"),
                y_true: 0.0125,
                y_pred: -3.5,
            },
        ];
        let text = forecasts_to_csv(&rows);
        assert!(text.starts_with("date,y_true,y_pred\n2020-01-02,0.30000000000000004,"));
        assert_eq!(parse_forecasts(text.as_bytes()).unwrap(), rows);
    }

    #[test]
    fn forecast_errors() {
        assert!(parse_forecasts("date,y,y_pred\n".as_bytes()).is_err());
        let dup = "date,y_true,y_pred\n2020-01-02,1,1\n2020-01-02,1,1\n";
        assert!(matches!(parse_forecasts(dup.as_bytes()), Err(Error::DuplicateDate(_))));
        let back = "date,y_true,y_pred\n2020-01-03,1,1\n2020-01-02,1,1\n";
        assert!(matches!(parse_forecasts(back.as_bytes()), Err(Error::Malformed { line: 3, .. })));
        let nan = "date,y_true,y_pred\n2020-01-02,NaN,1\n";
        assert!(parse_forecasts(nan.as_bytes()).is_err());
    }

    #[test]
    fn sv_round_trip() {
        let rows = vec![SvForecast {
            date: d("2021-05-04"),
            median_vol: 0.011,
            quantiles: vec![(0.05, 0.006), (0.5, 0.011), (0.975, 0.02)],
        }];
        let text = sv_forecasts_to_csv(&rows);
        assert!(text.starts_with("date,median_vol,q05,q50,q97.5\n"));
        let back = parse_sv_forecasts(text.as_bytes()).unwrap();
        assert_eq!(back[0].date, rows[0].date);
        assert_eq!(back[0].median_vol, rows[0].median_vol);
        for ((p, v), (q, w)) in back[0].quantiles.iter().zip(&rows[0].quantiles) {
            assert!((p - q).abs() < 1e-15);
            assert_eq!(v, w);
        }
        assert!(parse_sv_forecasts("date,median_vol,qx\n".as_bytes()).is_err());
    }
}
