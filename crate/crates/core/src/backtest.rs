//! Volatility-signal trading on monthly futures: signal generation, a daily
//! simulation with settlement rollover and flat costs, and equity statistics.
//!
//! Accounting, per trading day `t` after the first:
//!
//! ```text
//! position_return_t = held_t * (mark_t / prev_mark - 1)
//! equity_pre_t      = equity_{t-1} * (1 + allocation * position_return_t)
//! cost_t            = events_t * cost_rate * allocation * equity_pre_t
//! equity_t          = equity_pre_t - cost_t
//! ```
//!
//! `mark_t` is the held contract's close, or its settlement price on the day
//! it expires. Opening costs one event; a flip or a roll costs two (exit and
//! entry), and a flip on a roll day shares the roll's two legs.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::{parse_date, parse_number, DATE_FORMAT};
use crate::pipeline::ForecastRow;

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub symbol: String,
    pub expiration: NaiveDate,
    pub settlement_price: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuturesRow {
    pub trade_date: NaiveDate,
    pub symbol: String,
    pub close: f64,
}

/// Daily closes for a strip of contracts plus their settlement records.
#[derive(Debug, Clone)]
pub struct FuturesSeries {
    /// Sorted by expiration, which is unique per contract.
    contracts: Vec<Contract>,
    closes: HashMap<(NaiveDate, usize), f64>,
    rows: Vec<FuturesRow>,
}

impl FuturesSeries {
    pub fn new(rows: Vec<FuturesRow>, settlements: Vec<Contract>) -> Result<Self> {
        let mut contracts = settlements;
        contracts.sort_by(|a, b| a.expiration.cmp(&b.expiration).then_with(|| a.symbol.cmp(&b.symbol)));
        for pair in contracts.windows(2) {
            if pair[0].symbol == pair[1].symbol {
                return Err(Error::InvalidArgument(format!("duplicate settlement for {}", pair[0].symbol)));
            }
            if pair[0].expiration == pair[1].expiration {
                return Err(Error::InvalidArgument(format!(
                    "contracts {} and {} share expiration {}",
                    pair[0].symbol, pair[1].symbol, pair[0].expiration
                )));
            }
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, c) in contracts.iter().enumerate() {
            if !(c.settlement_price > 0.0 && c.settlement_price.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "settlement price {} for {} is not positive",
                    c.settlement_price, c.symbol
                )));
            }
            if index.insert(c.symbol.as_str(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate settlement for {}", c.symbol)));
            }
        }
        let mut closes = HashMap::with_capacity(rows.len());
        for r in &rows {
            let &i = index
                .get(r.symbol.as_str())
                .ok_or_else(|| Error::Missing(format!("no settlement record for {}", r.symbol)))?;
            if !(r.close > 0.0 && r.close.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "close {} for {} on {} is not positive",
                    r.close, r.symbol, r.trade_date
                )));
            }
            if r.trade_date > contracts[i].expiration {
                return Err(Error::InvalidArgument(format!(
                    "{} trades on {} after its expiration {}",
                    r.symbol, r.trade_date, contracts[i].expiration
                )));
            }
            if closes.insert((r.trade_date, i), r.close).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate close for {} on {}",
                    r.symbol, r.trade_date
                )));
            }
        }
        Ok(FuturesSeries { contracts, closes, rows })
    }

    pub fn contracts(&self) -> &[Contract] {
        &self.contracts
    }

    pub fn rows(&self) -> &[FuturesRow] {
        &self.rows
    }

    /// Calendar days from each row's trade date to its contract's expiration.
    pub fn days_to_expiry(&self) -> Vec<i64> {
        self.rows
            .iter()
            .map(|r| {
                let c = self.contracts.iter().find(|c| c.symbol == r.symbol).expect("validated");
                (c.expiration - r.trade_date).num_days()
            })
            .collect()
    }

    /// Index of the nearest contract that is still open after `date`'s close.
    fn front_after(&self, date: NaiveDate) -> Result<usize> {
        let i = self.contracts.partition_point(|c| c.expiration <= date);
        if i == self.contracts.len() {
            return Err(Error::Missing(format!("no contract expiring after {date}")));
        }
        Ok(i)
    }

    fn close(&self, date: NaiveDate, contract: usize) -> Result<f64> {
        self.closes.get(&(date, contract)).copied().ok_or_else(|| {
            Error::Missing(format!("no close for {} on {date}", self.contracts[contract].symbol))
        })
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input)
}

fn expect_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers()?;
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Malformed {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    Ok(())
}

fn record_line(rec: &csv::StringRecord, width: usize) -> Result<u64> {
    let line = rec.position().map_or(0, |p| p.line());
    if rec.len() != width {
        return Err(Error::Malformed {
            line,
            message: format!("expected {width} fields, found {}", rec.len()),
        });
    }
    Ok(line)
}

fn parse_symbol(field: &str, line: u64) -> Result<String> {
    if field.is_empty() {
        return Err(Error::Malformed {
            line,
            message: "empty symbol".into(),
        });
    }
    Ok(field.to_string())
}

fn parse_positive(field: &str, what: &str, line: u64) -> Result<f64> {
    let value = parse_number(field, what, line)?;
    if value <= 0.0 {
        return Err(Error::NonPositivePrice { line, value });
    }
    Ok(value)
}

/// Parses `trade_date,symbol,close`.
pub fn parse_futures<R: Read>(input: R) -> Result<Vec<FuturesRow>> {
    let mut rdr = reader(input);
    expect_header(&mut rdr, &["trade_date", "symbol", "close"])?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = record_line(&rec, 3)?;
        rows.push(FuturesRow {
            trade_date: parse_date(&rec[0], line)?,
            symbol: parse_symbol(&rec[1], line)?,
            close: parse_positive(&rec[2], "close", line)?,
        });
    }
    Ok(rows)
}

/// Parses `symbol,expiration_date,settlement_price`.
pub fn parse_settlements<R: Read>(input: R) -> Result<Vec<Contract>> {
    let mut rdr = reader(input);
    expect_header(&mut rdr, &["symbol", "expiration_date", "settlement_price"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = record_line(&rec, 3)?;
        out.push(Contract {
            symbol: parse_symbol(&rec[0], line)?,
            expiration: parse_date(&rec[1], line)?,
            settlement_price: parse_positive(&rec[2], "settlement_price", line)?,
        });
    }
    Ok(out)
}

pub fn load_futures(futures: &Path, settlements: &Path) -> Result<FuturesSeries> {
    let f = std::fs::File::open(futures).map_err(|e| Error::io(futures, e))?;
    let s = std::fs::File::open(settlements).map_err(|e| Error::io(settlements, e))?;
    FuturesSeries::new(parse_futures(f)?, parse_settlements(s)?)
}

/// +1 long, -1 short; one per trading date.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalSeries {
    pub dates: Vec<NaiveDate>,
    pub signals: Vec<i8>,
}

impl SignalSeries {
    pub fn constant(dates: Vec<NaiveDate>, signal: i8) -> Self {
        let signals = vec![signal; dates.len()];
        SignalSeries { dates, signals }
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn flips(&self) -> usize {
        self.signals.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

/// Long when tomorrow's forecast exceeds today's actual, short when below.
/// A tie keeps the previous signal; a tie on the first day is short.
pub fn make_signals(dates: &[NaiveDate], forecast_next: &[f64], actual: &[f64]) -> Result<SignalSeries> {
    if forecast_next.len() != dates.len() || actual.len() != dates.len() {
        return Err(Error::Misaligned(format!(
            "{} dates, {} forecasts, {} actuals",
            dates.len(),
            forecast_next.len(),
            actual.len()
        )));
    }
    if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::Misaligned(format!("dates not increasing at {}", w[1])));
    }
    let mut prev = -1i8;
    let signals = forecast_next
        .iter()
        .zip(actual)
        .map(|(f, a)| {
            if f > a {
                prev = 1;
            } else if f < a {
                prev = -1;
            }
            prev
        })
        .collect();
    Ok(SignalSeries {
        dates: dates.to_vec(),
        signals,
    })
}

/// Signals from a forecast file: on row `t`, compare the forecast made for row
/// `t + 1` against the actual on row `t`. The last row has no successor and
/// yields no signal.
pub fn signals_from_forecasts(rows: &[ForecastRow]) -> Result<SignalSeries> {
    if rows.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: rows.len(),
        });
    }
    let n = rows.len() - 1;
    let dates: Vec<_> = rows[..n].iter().map(|r| r.date).collect();
    let forecast: Vec<_> = rows[1..].iter().map(|r| r.y_pred).collect();
    let actual: Vec<_> = rows[..n].iter().map(|r| r.y_true).collect();
    make_signals(&dates, &forecast, &actual)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub initial_capital: f64,
    pub allocation: f64,
    pub cost_rate: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            initial_capital: 1000.0,
            allocation: 0.25,
            cost_rate: 0.001,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.initial_capital > 0.0 && self.initial_capital.is_finite()) {
            problems.push(format!("initial_capital must be positive, got {}", self.initial_capital));
        }
        if !(self.allocation > 0.0 && self.allocation <= 1.0) {
            problems.push(format!("allocation must be in (0, 1], got {}", self.allocation));
        }
        if !(self.cost_rate >= 0.0 && self.cost_rate < 1.0) {
            problems.push(format!("cost_rate must be in [0, 1), got {}", self.cost_rate));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub date: NaiveDate,
    /// Contract held after the close.
    pub contract: String,
    /// Position carried into the day; 0 on the first day.
    pub held: i8,
    /// Position after the close.
    pub position: i8,
    /// Price the new position was opened at, if one was opened today.
    pub entry_price: Option<f64>,
    /// Close or settlement used to mark the carried position.
    pub exit_price: Option<f64>,
    /// Unscaled, pre-cost return of the carried position.
    pub position_return: f64,
    pub rolled: bool,
    pub flipped: bool,
    pub cost_events: u32,
    pub cost_paid: f64,
    pub daily_return: f64,
    pub equity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeLedger {
    pub config: BacktestConfig,
    pub records: Vec<LedgerRecord>,
    /// Set when equity reached zero; the ledger stops on that day.
    pub bankrupt: bool,
}

impl TradeLedger {
    /// Initial capital followed by each day's closing equity.
    pub fn equity_curve(&self) -> Vec<f64> {
        std::iter::once(self.config.initial_capital)
            .chain(self.records.iter().map(|r| r.equity))
            .collect()
    }

    pub fn final_equity(&self) -> f64 {
        self.records.last().map_or(self.config.initial_capital, |r| r.equity)
    }

    pub fn total_cost_events(&self) -> u32 {
        self.records.iter().map(|r| r.cost_events).sum()
    }

    pub fn to_csv(&self) -> String {
        fn opt(x: Option<f64>) -> String {
            x.map_or(String::new(), |v| v.to_string())
        }
        let mut out = String::from(
            "date,contract,held,position,entry_price,exit_price,position_return,rolled,flipped,cost_events,cost_paid,daily_return,equity\n",
        );
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.date.format(DATE_FORMAT),
                r.contract,
                r.held,
                r.position,
                opt(r.entry_price),
                opt(r.exit_price),
                r.position_return,
                r.rolled,
                r.flipped,
                r.cost_events,
                r.cost_paid,
                r.daily_return,
                r.equity
            );
        }
        out
    }
}

/// Runs the signal series over the futures strip.
pub fn simulate(futures: &FuturesSeries, signals: &SignalSeries, config: &BacktestConfig) -> Result<TradeLedger> {
    config.validate()?;
    if signals.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    if let Some(s) = signals.signals.iter().find(|s| s.abs() != 1) {
        return Err(Error::InvalidArgument(format!("signal {s} is not +1 or -1")));
    }
    if let Some(w) = signals.dates.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::Misaligned(format!("signal dates not increasing at {}", w[1])));
    }
    let alloc = config.allocation;
    let fee = config.cost_rate * alloc;

    let first = signals.dates[0];
    let mut contract = futures.front_after(first)?;
    let mut mark = futures.close(first, contract)?;
    let mut position = signals.signals[0];
    let pre = config.initial_capital;
    let cost = fee * pre;
    let mut equity = pre - cost;
    let mut records = vec![LedgerRecord {
        date: first,
        contract: futures.contracts[contract].symbol.clone(),
        held: 0,
        position,
        entry_price: Some(mark),
        exit_price: None,
        position_return: 0.0,
        rolled: false,
        flipped: false,
        cost_events: 1,
        cost_paid: cost,
        daily_return: equity / pre - 1.0,
        equity,
    }];
    if equity <= 0.0 {
        return Ok(TradeLedger {
            config: *config,
            records,
            bankrupt: true,
        });
    }

    for (&date, &signal) in signals.dates.iter().zip(&signals.signals).skip(1) {
        let held = position;
        let expiring = &futures.contracts[contract];
        // An expiration falling between signal dates settles on the next one.
        let rolled = expiring.expiration <= date;
        let exit = if rolled {
            expiring.settlement_price
        } else {
            futures.close(date, contract)?
        };
        let position_return = f64::from(held) * (exit / mark - 1.0);
        let flipped = signal != held;

        let mut entry_price = None;
        if rolled {
            contract = futures.front_after(date)?;
            mark = futures.close(date, contract)?;
            entry_price = Some(mark);
        } else {
            mark = exit;
            if flipped {
                entry_price = Some(mark);
            }
        }
        let cost_events = if rolled || flipped { 2 } else { 0 };

        let prev = equity;
        let pre = prev * (1.0 + alloc * position_return);
        let cost = f64::from(cost_events) * fee * pre;
        equity = pre - cost;
        position = signal;
        records.push(LedgerRecord {
            date,
            contract: futures.contracts[contract].symbol.clone(),
            held,
            position,
            entry_price,
            exit_price: Some(exit),
            position_return,
            rolled,
            flipped,
            cost_events,
            cost_paid: cost,
            daily_return: equity / prev - 1.0,
            equity,
        });
        if equity <= 0.0 {
            return Ok(TradeLedger {
                config: *config,
                records,
                bankrupt: true,
            });
        }
    }
    Ok(TradeLedger {
        config: *config,
        records,
        bankrupt: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    LongOnly,
    ShortOnly,
}

impl BenchmarkKind {
    pub fn signal(self) -> i8 {
        match self {
            BenchmarkKind::LongOnly => 1,
            BenchmarkKind::ShortOnly => -1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::LongOnly => "long_only",
            BenchmarkKind::ShortOnly => "short_only",
        }
    }
}

/// A constant position over `dates`, rolled like any other strategy.
pub fn benchmark(
    kind: BenchmarkKind,
    futures: &FuturesSeries,
    dates: &[NaiveDate],
    config: &BacktestConfig,
) -> Result<TradeLedger> {
    simulate(futures, &SignalSeries::constant(dates.to_vec(), kind.signal()), config)
}

/// Performance summary of an equity line. Ratios are `None` when their
/// denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyStats {
    pub sharpe: Option<f64>,
    pub calmar: Option<f64>,
    pub arc_percent: f64,
    pub asd_percent: f64,
    pub max_drawdown_percent: f64,
    pub total_return_percent: f64,
}

pub fn strategy_stats(ledger: &TradeLedger) -> Result<StrategyStats> {
    equity_stats(&ledger.equity_curve())
}

/// ARC compounds over a 252-day year; ASD is the annualised sample standard
/// deviation of daily returns (zero with a single return); the Sharpe ratio
/// uses a zero risk-free rate.
pub fn equity_stats(equity: &[f64]) -> Result<StrategyStats> {
    if equity.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: equity.len(),
        });
    }
    if let Some(e) = equity.iter().find(|e| !e.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite equity {e}")));
    }
    if equity[0] <= 0.0 {
        return Err(Error::InvalidArgument(format!("starting equity {} is not positive", equity[0])));
    }
    let n = equity.len() - 1;
    let growth = equity[n] / equity[0];
    let arc = if growth > 0.0 {
        growth.powf(TRADING_DAYS_PER_YEAR / n as f64) - 1.0
    } else {
        -1.0
    };
    let returns: Vec<f64> = equity.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let asd = if n < 2 {
        0.0
    } else {
        let mean = returns.iter().sum::<f64>() / n as f64;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var * TRADING_DAYS_PER_YEAR).sqrt()
    };
    let mut peak = f64::NEG_INFINITY;
    let mut max_dd = 0.0f64;
    for &e in equity {
        peak = peak.max(e);
        max_dd = max_dd.min(e / peak - 1.0);
    }
    Ok(StrategyStats {
        sharpe: (asd > 0.0).then(|| arc / asd),
        calmar: (max_dd < 0.0).then(|| arc / max_dd.abs()),
        arc_percent: 100.0 * arc,
        asd_percent: 100.0 * asd,
        max_drawdown_percent: 100.0 * max_dd,
        total_return_percent: 100.0 * (growth - 1.0),
    })
}

/// Named stats in insertion order, serialised as a JSON object.
pub fn stats_table(rows: &[(String, StrategyStats)]) -> serde_json::Value {
    let map: serde_json::Map<String, serde_json::Value> = rows
        .iter()
        .map(|(name, s)| (name.clone(), serde_json::to_value(s).expect("plain struct")))
        .collect();
    serde_json::Value::Object(map)
}

/// Dates on which the strip has no quotes at all.
pub fn coverage_gaps(futures: &FuturesSeries, dates: &[NaiveDate]) -> Vec<NaiveDate> {
    let traded: BTreeSet<NaiveDate> = futures.rows.iter().map(|r| r.trade_date).collect();
    dates.iter().filter(|d| !traded.contains(d)).copied().collect()
}
