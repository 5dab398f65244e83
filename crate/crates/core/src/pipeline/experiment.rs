//! Rolling-window experiment runs.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelKind};
use super::features::{assemble_hybrid_features, assemble_lstm_features, make_sequences, FeatureMatrix};
use super::output::{forecasts_to_csv, load_sv_forecasts, sv_forecasts_to_csv, ForecastRow};
use super::scaler::{fit_scaler, Scaler, ScalerKind};
use super::windows::{split_windows, Window};
use crate::error::{Error, Result};
use crate::evaluation::{point_metrics, MetricReport};
use crate::marketdata::{load_prices, log_returns, rolling_volatility, PriceSeries, ReturnSeries, VolSeries};
use crate::neuralnet::serialize::to_json;
use crate::neuralnet::{random_search, train, HyperParams, LstmNetwork, Sample, SearchResult, TrainConfig, TrainReport};
use crate::seed::{derive_seed, rng_from};
use crate::svmodel::{rolling_sv_forecast, SvForecast};

const SV_STREAM: u64 = 0;
const WINDOW_STREAM: u64 = 1;

/// Loaded series and the aligned feature rows every window indexes into.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub returns: ReturnSeries,
    pub vol: VolSeries,
    pub sv: Option<Vec<SvForecast>>,
    /// Seed of the rolling SV fit; `None` when forecasts were loaded or unused.
    pub sv_seed: Option<u64>,
    pub features: FeatureMatrix,
}

/// Builds returns, volatility, SV forecasts (when the model needs them) and
/// features. Rows start where the first SV forecast becomes a feature, for
/// every model, so all models share forecast dates.
pub fn prepare(
    prices: &PriceSeries,
    config: &ExperimentConfig,
    sv_override: Option<Vec<SvForecast>>,
) -> Result<PreparedData> {
    let returns = log_returns(prices)?;
    let vol = rolling_volatility(&returns, config.plan.vol_window)?;
    let needs_sv = config.plan.model != ModelKind::Lstm;
    let (sv, sv_seed) = match (needs_sv, sv_override) {
        (false, _) => (None, None),
        (true, Some(sv)) => (Some(sv), None),
        (true, None) => {
            let seed = derive_seed(config.plan.seed, &[SV_STREAM]);
            (Some(rolling_sv_forecast(&returns, &config.sv, seed)?), Some(seed))
        }
    };
    let features = match (&config.plan.model, &sv) {
        (ModelKind::Hybrid, Some(sv)) => assemble_hybrid_features(&returns, &vol, sv)?,
        _ => {
            let first_row = config.sv.train_len.checked_sub(1).filter(|&i| i < returns.len());
            let start = first_row.ok_or(Error::TooShort {
                needed: config.sv.train_len + 1,
                got: returns.len(),
            })?;
            assemble_lstm_features(&returns, &vol)?.from_date(returns.dates()[start])
        }
    };
    Ok(PreparedData {
        returns,
        vol,
        sv,
        sv_seed,
        features,
    })
}

/// Feature and target scalers fitted on the same rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerPair {
    pub features: Scaler,
    pub target: Scaler,
}

pub fn fit_scalers(features: &FeatureMatrix, rows: Range<usize>, kind: ScalerKind) -> Result<ScalerPair> {
    let part = features.slice(rows);
    Ok(ScalerPair {
        features: fit_scaler(kind, &part.values)?,
        target: fit_scaler(kind, &part.current_rows())?,
    })
}

fn samples(scaled: &FeatureMatrix, rows: Range<usize>, lookback: usize) -> Result<Vec<Sample>> {
    Ok(make_sequences(&scaled.slice(rows), lookback)?.samples())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSeeds {
    pub window: u64,
    pub search: u64,
    pub init: u64,
    pub train: u64,
}

impl WindowSeeds {
    pub fn derive(base: u64, window: usize) -> Self {
        let w = derive_seed(base, &[WINDOW_STREAM, window as u64]);
        Self {
            window: w,
            search: derive_seed(w, &[0]),
            init: derive_seed(w, &[1]),
            train: derive_seed(w, &[2]),
        }
    }
}

/// Everything learned inside one window from its training and validation
/// rows.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFit {
    pub seeds: WindowSeeds,
    pub tuning_scalers: Option<ScalerPair>,
    pub final_scalers: ScalerPair,
    pub search: Option<SearchResult>,
    pub hyperparams: HyperParams,
    pub network: LstmNetwork,
    pub train_report: TrainReport,
    pub n_train_sequences: usize,
    pub n_val_sequences: usize,
}

/// Tunes (unless pinned) and trains the network of one window. Reads only
/// rows before `window.test`.
pub fn fit_window(features: &FeatureMatrix, window: &Window, config: &ExperimentConfig) -> Result<WindowFit> {
    let plan = &config.plan;
    let lookback = plan.lookback;
    let seeds = WindowSeeds::derive(plan.seed, window.index);

    let (tuning_scalers, search, mut hyperparams) = match &config.hyperparams {
        Some(hp) => (None, None, hp.clone()),
        None => {
            let scalers = fit_scalers(features, window.train.start..window.val.end, plan.scaler)?;
            let scaled = features.scaled(&scalers.features, &scalers.target)?;
            let train_set = samples(&scaled, window.train.clone(), lookback)?;
            let val_set = samples(&scaled, window.val.clone(), lookback)?;
            let mut space = config.tuning.space.clone();
            if let Some(loss) = plan.loss {
                space.losses = vec![loss];
            }
            let result = random_search(&space, &config.tuning.search(), &train_set, &val_set, seeds.search)?;
            let best = result.best.clone();
            (Some(scalers), Some(result), best)
        }
    };
    if let Some(loss) = plan.loss {
        hyperparams.loss = loss;
    }

    let final_scalers = fit_scalers(features, window.train.clone(), plan.scaler)?;
    let scaled = features.scaled(&final_scalers.features, &final_scalers.target)?;
    let train_set = samples(&scaled, window.train.clone(), lookback)?;
    let val_set = samples(&scaled, window.val.clone(), lookback)?;
    let mut network = hyperparams.build(features.width(), &mut rng_from(seeds.init))?;
    let train_config = TrainConfig {
        max_epochs: config.tuning.final_epochs,
        patience: config.tuning.final_patience,
        batch_size: config.tuning.batch_size,
        learning_rate: hyperparams.learning_rate,
    };
    let train_report = train(&mut network, &train_set, &val_set, &train_config, seeds.train)?;
    Ok(WindowFit {
        seeds,
        tuning_scalers,
        final_scalers,
        search,
        hyperparams,
        network,
        train_report,
        n_train_sequences: train_set.len(),
        n_val_sequences: val_set.len(),
    })
}

/// Test-year forecasts of a fitted window. The first input block ends on the
/// last validation row, so every test row gets a forecast.
pub fn predict_window(
    features: &FeatureMatrix,
    window: &Window,
    fit: &WindowFit,
    lookback: usize,
) -> Result<Vec<ForecastRow>> {
    let start = window.test.start.checked_sub(lookback).ok_or(Error::TooShort {
        needed: lookback,
        got: window.test.start,
    })?;
    let scaled = features.scaled(&fit.final_scalers.features, &fit.final_scalers.target)?;
    let seq = make_sequences(&scaled.slice(start..window.test.end), lookback)?;
    window
        .test
        .clone()
        .zip(seq.inputs.iter().zip(&seq.target_dates))
        .map(|(row, (x, &date))| {
            if date != features.dates[row] {
                return Err(Error::Misaligned(format!(
                    "sequence target {date} does not match test row {}",
                    features.dates[row]
                )));
            }
            let p = fit.network.forward(x)?;
            Ok(ForecastRow {
                date,
                y_true: features.current[row],
                y_pred: fit.final_scalers.target.inverse_value(0, p),
            })
        })
        .collect()
}

fn sv_window(features: &FeatureMatrix, window: &Window, sv: &HashMap<NaiveDate, f64>) -> Result<Vec<ForecastRow>> {
    window
        .test
        .clone()
        .map(|row| {
            let date = features.dates[row];
            let y_pred = *sv
                .get(&date)
                .ok_or_else(|| Error::Missing(format!("SV forecast for {date}")))?;
            Ok(ForecastRow {
                date,
                y_true: features.current[row],
                y_pred,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateSpan {
    pub first: NaiveDate,
    pub last: NaiveDate,
    pub rows: usize,
}

impl DateSpan {
    fn of(features: &FeatureMatrix, rows: &Range<usize>) -> Self {
        Self {
            first: features.dates[rows.start],
            last: features.dates[rows.end - 1],
            rows: rows.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window: usize,
    pub model: ModelKind,
    pub train: DateSpan,
    pub val: DateSpan,
    pub test: DateSpan,
    pub lookback: usize,
    pub seeds: Option<WindowSeeds>,
    pub tuned: bool,
    pub trial_scores: Option<Vec<f64>>,
    pub n_train_sequences: Option<usize>,
    pub n_val_sequences: Option<usize>,
    pub n_test: usize,
    pub tuning_scalers: Option<ScalerPair>,
    pub final_scalers: Option<ScalerPair>,
    pub training: Option<TrainingSummary>,
    /// `None` when an actual is zero.
    pub metrics: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutcome {
    pub report: WindowReport,
    pub fit: Option<WindowFit>,
    pub forecasts: Vec<ForecastRow>,
}

fn run_window(
    prepared: &PreparedData,
    window: &Window,
    config: &ExperimentConfig,
    sv_by_date: &HashMap<NaiveDate, f64>,
) -> Result<WindowOutcome> {
    let features = &prepared.features;
    let (fit, forecasts) = match config.plan.model {
        ModelKind::Sv => (None, sv_window(features, window, sv_by_date)?),
        ModelKind::Lstm | ModelKind::Hybrid => {
            let fit = fit_window(features, window, config)?;
            let forecasts = predict_window(features, window, &fit, config.plan.lookback)?;
            (Some(fit), forecasts)
        }
    };
    let y_true: Vec<f64> = forecasts.iter().map(|f| f.y_true).collect();
    let y_pred: Vec<f64> = forecasts.iter().map(|f| f.y_pred).collect();
    let report = WindowReport {
        window: window.index,
        model: config.plan.model,
        train: DateSpan::of(features, &window.train),
        val: DateSpan::of(features, &window.val),
        test: DateSpan::of(features, &window.test),
        lookback: config.plan.lookback,
        seeds: fit.as_ref().map(|f| f.seeds),
        tuned: fit.as_ref().is_some_and(|f| f.search.is_some()),
        trial_scores: fit.as_ref().and_then(|f| f.search.as_ref()).map(SearchResult::mean_scores),
        n_train_sequences: fit.as_ref().map(|f| f.n_train_sequences),
        n_val_sequences: fit.as_ref().map(|f| f.n_val_sequences),
        n_test: forecasts.len(),
        tuning_scalers: fit.as_ref().and_then(|f| f.tuning_scalers.clone()),
        final_scalers: fit.as_ref().map(|f| f.final_scalers.clone()),
        training: fit.as_ref().map(|f| TrainingSummary {
            epochs_run: f.train_report.epochs_run,
            best_epoch: f.train_report.best_epoch,
            best_val_loss: f.train_report.best_val_loss,
        }),
        metrics: point_metrics(&y_true, &y_pred).ok(),
    };
    Ok(WindowOutcome { report, fit, forecasts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub model: ModelKind,
    pub feature_columns: Vec<String>,
    pub n_feature_rows: usize,
    /// Test forecasts of all windows, in date order.
    pub forecasts: Vec<ForecastRow>,
    pub windows: Vec<WindowOutcome>,
    pub sv_forecasts: Option<Vec<SvForecast>>,
    pub sv_seed: Option<u64>,
}

impl ExperimentOutput {
    pub fn metrics(&self) -> Option<MetricReport> {
        let y: Vec<f64> = self.forecasts.iter().map(|f| f.y_true).collect();
        let p: Vec<f64> = self.forecasts.iter().map(|f| f.y_pred).collect();
        point_metrics(&y, &p).ok()
    }
}

/// Runs every window on prepared data. Windows whose test years overlap
/// (step shorter than a test year) keep the earlier window's forecast.
pub fn run_prepared(prepared: &PreparedData, config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let windows = split_windows(prepared.features.len(), &config.windows)?;
    let sv_by_date: HashMap<NaiveDate, f64> = prepared
        .sv
        .iter()
        .flatten()
        .map(|f| (f.date, f.median_vol))
        .collect();
    let outcomes = windows
        .par_iter()
        .map(|w| run_window(prepared, w, config, &sv_by_date).map_err(|e| e.in_window(w.index)))
        .collect::<Result<Vec<_>>>()?;
    let mut forecasts: Vec<ForecastRow> = Vec::new();
    for o in &outcomes {
        for f in &o.forecasts {
            if forecasts.last().map_or(true, |last| f.date > last.date) {
                forecasts.push(*f);
            }
        }
    }
    Ok(ExperimentOutput {
        model: config.plan.model,
        feature_columns: prepared.features.columns.clone(),
        n_feature_rows: prepared.features.len(),
        forecasts,
        windows: outcomes,
        sv_forecasts: prepared.sv.clone(),
        sv_seed: prepared.sv_seed,
    })
}

/// Loads the configured data and runs the experiment. The config is validated
/// before any data is read.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let prices = load_prices(&config.data.prices, &config.data.columns())?;
    let sv = match (&config.data.sv_forecasts, config.plan.model) {
        (Some(path), ModelKind::Sv | ModelKind::Hybrid) => Some(load_sv_forecasts(path)?),
        _ => None,
    };
    let prepared = prepare(&prices, config, sv)?;
    run_prepared(&prepared, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: ModelKind,
    pub feature_columns: Vec<String>,
    pub n_feature_rows: usize,
    pub n_windows: usize,
    pub n_forecasts: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub sv_seed: Option<u64>,
    pub metrics: Option<MetricReport>,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Writes `forecasts.csv`, `summary.json`, `sv_forecasts.csv` (when SV ran)
/// and `window_k/` with `report.json`, plus `hyperparams.json`,
/// `training_log.csv`, `network.json` and `search.json` for fitted models.
/// Returns the written paths, relative to `dir`.
pub fn write_run(dir: &Path, output: &ExperimentOutput) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |rel: String, contents: String| -> Result<()> {
        let path = dir.join(&rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write(&path, &contents)?;
        written.push(rel);
        Ok(())
    };
    put("forecasts.csv".into(), forecasts_to_csv(&output.forecasts))?;
    if let Some(sv) = &output.sv_forecasts {
        put("sv_forecasts.csv".into(), sv_forecasts_to_csv(sv))?;
    }
    for o in &output.windows {
        let k = o.report.window;
        put(format!("window_{k}/report.json"), json(&o.report)?)?;
        if let Some(fit) = &o.fit {
            put(format!("window_{k}/hyperparams.json"), json(&fit.hyperparams)?)?;
            put(format!("window_{k}/training_log.csv"), fit.train_report.to_csv())?;
            put(format!("window_{k}/network.json"), to_json(&fit.network, Some(&fit.hyperparams))? + "\n")?;
            if let Some(search) = &fit.search {
                put(format!("window_{k}/search.json"), json(search)?)?;
            }
        }
    }
    let summary = RunSummary {
        model: output.model,
        feature_columns: output.feature_columns.clone(),
        n_feature_rows: output.n_feature_rows,
        n_windows: output.windows.len(),
        n_forecasts: output.forecasts.len(),
        first_date: output.forecasts.first().map(|f| f.date),
        last_date: output.forecasts.last().map(|f| f.date),
        sv_seed: output.sv_seed,
        metrics: output.metrics(),
    };
    put("summary.json".into(), json(&summary)?)?;
    Ok(written)
}
