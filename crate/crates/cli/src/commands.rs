use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use volcast::backtest::{
    benchmark, coverage_gaps, load_futures, signals_from_forecasts, simulate, stats_table, strategy_stats,
    BacktestConfig, BenchmarkKind, SignalSeries,
};
use volcast::evaluation::{compare_forecasts, DmOptions};
use volcast::marketdata::{describe, load_prices, log_returns, rolling_volatility, PriceColumns, DATE_FORMAT};
use volcast::pipeline::features::{vol_column, RETURN_COLUMN};
use volcast::pipeline::{load_forecasts, run_experiment, write_run, ExperimentConfig};

use crate::manifest::Manifest;
use crate::{BacktestArgs, CliError, CompareArgs, DataArgs, ForecastArgs};

/// Reads an optional settings file; relative paths inside it resolve
/// against its directory, which is returned alongside.
fn settings<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<(T, PathBuf), CliError> {
    let Some(path) = path else {
        return Ok((T::default(), PathBuf::new()));
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value = toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Ok((value, path.parent().unwrap_or(Path::new("")).to_path_buf()))
}

fn required<T>(value: Option<T>, name: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::usage(format!("--{name} is required (flag or config file)")))
}

fn effective_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("settings serialise")
}

/// Writes files into `dir`, remembering their relative names for the manifest.
struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn put(&mut self, rel: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(rel);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.written.push(rel.to_string());
        Ok(())
    }

    fn put_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        self.put(rel, &(serde_json::to_string_pretty(value).expect("plain data") + "\n"))
    }

    fn finish(self, manifest: Manifest) -> Result<(), CliError> {
        manifest.finish(&self.dir, &self.written)
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSettings {
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    window: Option<usize>,
    date_column: Option<String>,
    close_column: Option<String>,
}

#[derive(Serialize)]
struct DataEffective<'a> {
    input: &'a Path,
    window: usize,
    date_column: &'a str,
    close_column: &'a str,
}

#[derive(Serialize)]
struct DataStats {
    n_prices: usize,
    first_date: String,
    last_date: String,
    vol_window: usize,
    returns: volcast::marketdata::DescriptiveStats,
    rolling_vol: volcast::marketdata::DescriptiveStats,
}

pub fn data(args: DataArgs) -> Result<(), CliError> {
    let (file, base) = settings::<DataSettings>(args.config.as_deref())?;
    let input = required(args.input.or(file.input.map(|p| base.join(p))), "input")?;
    let out = required(args.out.or(file.out.map(|p| base.join(p))), "out")?;
    let window = args.window.or(file.window).unwrap_or(21);
    let defaults = PriceColumns::default();
    let columns = PriceColumns {
        date: args.date_column.or(file.date_column).unwrap_or(defaults.date),
        close: args.close_column.or(file.close_column).unwrap_or(defaults.close),
    };
    let effective = DataEffective {
        input: &input,
        window,
        date_column: &columns.date,
        close_column: &columns.close,
    };
    let mut manifest = Manifest::start("data", &effective_toml(&effective), None);
    manifest.input(&input)?;

    let prices = load_prices(&input, &columns)?;
    let returns = log_returns(&prices)?;
    let vol = rolling_volatility(&returns, window)?;

    let mut dir = OutDir::create(&out)?;
    let series_csv = |name: &str, dates: &[chrono::NaiveDate], values: &[f64]| {
        let mut s = format!("date,{name}\n");
        for (d, v) in dates.iter().zip(values) {
            let _ = writeln!(s, "{},{v}", d.format(DATE_FORMAT));
        }
        s
    };
    dir.put("returns.csv", &series_csv(RETURN_COLUMN, returns.dates(), returns.returns()))?;
    let vol_name = vol_column(window);
    dir.put(&format!("{vol_name}.csv"), &series_csv(&vol_name, vol.dates(), vol.values()))?;
    let stats = DataStats {
        n_prices: prices.len(),
        first_date: prices.dates()[0].format(DATE_FORMAT).to_string(),
        last_date: prices.dates()[prices.len() - 1].format(DATE_FORMAT).to_string(),
        vol_window: window,
        returns: describe(returns.returns())?,
        rolling_vol: describe(vol.values())?,
    };
    dir.put_json("stats.json", &stats)?;
    dir.finish(manifest)?;
    println!(
        "{} prices, {} returns, {} volatility points -> {}",
        prices.len(),
        returns.len(),
        vol.len(),
        out.display()
    );
    Ok(())
}

pub fn forecast(args: ForecastArgs) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.plan.seed = seed;
    }
    if let Some(m) = &args.model {
        cfg.plan.model = m.parse()?;
    }
    if let Some(l) = args.lookback {
        cfg.plan.lookback = l;
    }
    if let Some(s) = &args.scaler {
        cfg.plan.scaler = s.parse()?;
    }
    if let Some(l) = &args.loss {
        cfg.plan.loss = Some(l.parse()?);
    }
    if let Some(p) = args.prices {
        cfg.data.prices = p;
    }
    if let Some(p) = args.sv_forecasts {
        cfg.data.sv_forecasts = Some(p);
    }
    if let Some(n) = args.n_trials {
        cfg.tuning.n_trials = n;
    }
    let problems = cfg.problems();
    if !problems.is_empty() {
        let mut msg = format!("{} config problem(s):", problems.len());
        for p in &problems {
            let _ = write!(msg, "\n  - {p}");
        }
        return Err(CliError::usage(msg));
    }
    let effective = cfg.to_toml_string()?;
    let mut manifest = Manifest::start("forecast", &effective, Some(cfg.plan.seed));
    manifest.input(&cfg.data.prices)?;
    if let Some(p) = &cfg.data.sv_forecasts {
        manifest.input(p)?;
    }

    let output = run_experiment(&cfg)?;
    let written = write_run(&args.out, &output)?;
    let mut dir = OutDir {
        dir: args.out.clone(),
        written,
    };
    dir.put("config.toml", &effective)?;
    dir.finish(manifest)?;

    let mut line = format!(
        "{}: {} windows, {} forecasts",
        cfg.plan.model.name(),
        output.windows.len(),
        output.forecasts.len()
    );
    if let Some(m) = output.metrics() {
        let _ = write!(line, ", MSE {:e}, MAE {:e}", m.mse, m.mae);
    }
    println!("{line} -> {}", args.out.display());
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareSettings {
    files: Option<Vec<PathBuf>>,
    names: Option<Vec<String>>,
    out: Option<PathBuf>,
    horizon: Option<usize>,
    hln: Option<bool>,
}

/// File stem, or the parent directory for run outputs named `forecasts.csv`.
fn default_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if stem == "forecasts" {
        if let Some(parent) = path.parent().and_then(|p| p.file_name()) {
            return parent.to_string_lossy().into_owned();
        }
    }
    stem
}

pub fn compare(args: CompareArgs) -> Result<(), CliError> {
    let (file, base) = settings::<CompareSettings>(args.config.as_deref())?;
    let files = if args.files.is_empty() {
        file.files.unwrap_or_default().into_iter().map(|p| base.join(p)).collect()
    } else {
        args.files
    };
    if files.len() < 2 {
        return Err(CliError::usage("compare needs at least two forecast files"));
    }
    let mut names = match args.names.or(file.names) {
        Some(n) if n.len() != files.len() => {
            return Err(CliError::usage(format!("{} names for {} files", n.len(), files.len())));
        }
        Some(n) => n,
        None => files.iter().map(|p| default_name(p)).collect(),
    };
    for i in 1..names.len() {
        if names[..i].contains(&names[i]) {
            names[i] = format!("{}#{}", names[i], i + 1);
        }
    }
    let options = DmOptions {
        horizon: args.horizon.or(file.horizon).unwrap_or(1),
        hln: args.hln || file.hln.unwrap_or(false),
    };
    let out = args.out.or(file.out.map(|p| base.join(p)));

    let series = files
        .iter()
        .zip(&names)
        .map(|(p, n)| Ok((n.clone(), load_forecasts(p).map_err(|e| with_path(p, e))?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = compare_forecasts(&series, options)?;
    print!("{}", report.to_text());

    if let Some(out) = out {
        let effective = CompareSettings {
            files: Some(files.clone()),
            names: Some(names),
            out: None,
            horizon: Some(options.horizon),
            hln: Some(options.hln),
        };
        let mut manifest = Manifest::start("compare", &effective_toml(&effective), None);
        for f in &files {
            manifest.input(f)?;
        }
        let mut dir = OutDir::create(&out)?;
        dir.put_json("comparison.json", &report)?;
        dir.put("comparison.csv", &report.to_csv())?;
        dir.put("comparison.txt", &report.to_text())?;
        dir.finish(manifest)?;
    }
    Ok(())
}

fn with_path(path: &Path, e: volcast::Error) -> CliError {
    let mut err = CliError::from(e);
    err.message = format!("{}: {}", path.display(), err.message);
    err
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BacktestSettings {
    forecasts: Option<PathBuf>,
    futures: Option<PathBuf>,
    settlements: Option<PathBuf>,
    out: Option<PathBuf>,
    initial_capital: Option<f64>,
    allocation: Option<f64>,
    cost_rate: Option<f64>,
    benchmarks: Option<bool>,
}

fn signals_csv(s: &SignalSeries) -> String {
    let mut out = String::from("date,signal\n");
    for (d, v) in s.dates.iter().zip(&s.signals) {
        let _ = writeln!(out, "{},{v}", d.format(DATE_FORMAT));
    }
    out
}

pub fn backtest(args: BacktestArgs) -> Result<(), CliError> {
    let (file, base) = settings::<BacktestSettings>(args.config.as_deref())?;
    let resolve = |flag: Option<PathBuf>, f: Option<PathBuf>, name: &str| required(flag.or(f.map(|p| base.join(p))), name);
    let forecasts = resolve(args.forecasts, file.forecasts, "forecasts")?;
    let futures_path = resolve(args.futures, file.futures, "futures")?;
    let settlements = resolve(args.settlements, file.settlements, "settlements")?;
    let out = resolve(args.out, file.out, "out")?;
    let defaults = BacktestConfig::default();
    let config = BacktestConfig {
        initial_capital: args.initial_capital.or(file.initial_capital).unwrap_or(defaults.initial_capital),
        allocation: args.allocation.or(file.allocation).unwrap_or(defaults.allocation),
        cost_rate: args.cost_rate.or(file.cost_rate).unwrap_or(defaults.cost_rate),
    };
    config.validate()?;
    let with_benchmarks = args.benchmarks || file.benchmarks.unwrap_or(false);

    let effective = BacktestSettings {
        forecasts: Some(forecasts.clone()),
        futures: Some(futures_path.clone()),
        settlements: Some(settlements.clone()),
        out: None,
        initial_capital: Some(config.initial_capital),
        allocation: Some(config.allocation),
        cost_rate: Some(config.cost_rate),
        benchmarks: Some(with_benchmarks),
    };
    let mut manifest = Manifest::start("backtest", &effective_toml(&effective), None);
    for p in [&forecasts, &futures_path, &settlements] {
        manifest.input(p)?;
    }

    let rows = load_forecasts(&forecasts).map_err(|e| with_path(&forecasts, e))?;
    let signals = signals_from_forecasts(&rows)?;
    let futures = load_futures(&futures_path, &settlements)?;
    let gaps = coverage_gaps(&futures, &signals.dates);
    if let (Some(first), Some(last)) = (gaps.first(), gaps.last()) {
        return Err(CliError {
            code: 2,
            message: format!(
                "futures data has no quotes on {} signal date(s) between {} and {}",
                gaps.len(),
                first.format(DATE_FORMAT),
                last.format(DATE_FORMAT)
            ),
        });
    }

    let mut dir = OutDir::create(&out)?;
    dir.put("signals.csv", &signals_csv(&signals))?;
    let ledger = simulate(&futures, &signals, &config)?;
    dir.put("ledger.csv", &ledger.to_csv())?;
    let mut table = vec![("strategy".to_string(), strategy_stats(&ledger)?)];
    if with_benchmarks {
        for kind in [BenchmarkKind::LongOnly, BenchmarkKind::ShortOnly] {
            let l = benchmark(kind, &futures, &signals.dates, &config)?;
            dir.put(&format!("ledger_{}.csv", kind.name()), &l.to_csv())?;
            table.push((kind.name().to_string(), strategy_stats(&l)?));
        }
    }
    dir.put_json("stats.json", &stats_table(&table))?;
    dir.finish(manifest)?;

    let ratio = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
    println!(
        "{:<12} {:>8} {:>8} {:>9} {:>9} {:>10} {:>10}",
        "strategy", "sharpe", "calmar", "ARC%", "ASD%", "maxDD%", "total%"
    );
    for (name, s) in &table {
        println!(
            "{name:<12} {:>8} {:>8} {:>9.2} {:>9.2} {:>10.2} {:>10.2}",
            ratio(s.sharpe),
            ratio(s.calmar),
            s.arc_percent,
            s.asd_percent,
            s.max_drawdown_percent,
            s.total_return_percent
        );
    }
    if ledger.bankrupt {
        eprintln!("warning: strategy equity reached zero; ledger stops early");
    }
    Ok(())
}
