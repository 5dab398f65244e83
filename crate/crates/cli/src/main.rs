//! `volcast`: data preparation, forecasting runs, forecast comparison and
//! futures backtests from the command line.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use volcast::ErrorClass;

#[derive(Debug, Parser)]
#[command(name = "volcast", version, about = "Volatility forecasting with SV, LSTM and hybrid models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Log returns, rolling volatility and descriptive statistics for a price file.
    Data(DataArgs),
    /// Rolling-window forecasts for an experiment config.
    Forecast(ForecastArgs),
    /// Accuracy metrics and pairwise tests for aligned forecast files.
    Compare(CompareArgs),
    /// Trade futures on forecast signals and report performance.
    Backtest(BacktestArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// TOML file holding any of the options below; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Price CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rolling volatility window in trading days [default: 21].
    #[arg(long)]
    pub window: Option<usize>,
    /// [default: date]
    #[arg(long)]
    pub date_column: Option<String>,
    /// [default: close]
    #[arg(long)]
    pub close_column: Option<String>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Base seed for every random draw in the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// sv, lstm or hybrid.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub lookback: Option<usize>,
    /// minmax, standard or robust.
    #[arg(long)]
    pub scaler: Option<String>,
    /// Pins the training loss: mse, mae or madl.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub prices: Option<PathBuf>,
    /// Precomputed SV forecasts to reuse instead of refitting.
    #[arg(long)]
    pub sv_forecasts: Option<PathBuf>,
    #[arg(long)]
    pub n_trials: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// TOML file holding any of the options below; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Forecast CSVs (`date,y_true,y_pred`), at least two.
    pub files: Vec<PathBuf>,
    /// Comma-separated model names, one per file.
    #[arg(long, value_delimiter = ',')]
    pub names: Option<Vec<String>>,
    /// Directory for report files; the report is always printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Forecast horizon for the Diebold-Mariano variance [default: 1].
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Apply the Harvey-Leybourne-Newbold correction.
    #[arg(long)]
    pub hln: bool,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// TOML file holding any of the options below; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Forecast CSV the signals are built from.
    #[arg(long)]
    pub forecasts: Option<PathBuf>,
    /// Futures closes (`trade_date,symbol,close`).
    #[arg(long)]
    pub futures: Option<PathBuf>,
    /// Settlements (`symbol,expiration_date,settlement_price`).
    #[arg(long)]
    pub settlements: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// [default: 1000]
    #[arg(long)]
    pub initial_capital: Option<f64>,
    /// [default: 0.25]
    #[arg(long)]
    pub allocation: Option<f64>,
    /// [default: 0.001]
    #[arg(long)]
    pub cost_rate: Option<f64>,
    /// Also run long-only and short-only benchmarks.
    #[arg(long)]
    pub benchmarks: bool,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError {
            code: 2,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<volcast::Error> for CliError {
    fn from(e: volcast::Error) -> Self {
        let code = match e.class() {
            ErrorClass::Config => 1,
            ErrorClass::Data => 2,
            ErrorClass::Numeric => 3,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Data(a) => commands::data(a),
        Command::Forecast(a) => commands::forecast(a),
        Command::Compare(a) => commands::compare(a),
        Command::Backtest(a) => commands::backtest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
