#![allow(dead_code)]

use chrono::{Datelike, Days, NaiveDate, Weekday};
use volcast::marketdata::{PriceSeries, DATE_FORMAT};
use volcast::neuralnet::{Activation, DenseSpec, HyperParams, HyperSpace, LossKind, LstmSpec};
use volcast::pipeline::{ExperimentConfig, ModelKind, WindowPlan};
use volcast::seed::rng_from;
use volcast::svmodel::{simulate, SvParams};

/// `n` consecutive weekdays from 2000-01-03.
pub fn business_days(n: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Prices whose log returns follow the SV model with daily volatility near
/// one percent.
pub fn synthetic_prices(n: usize, seed: u64) -> PriceSeries {
    let params = SvParams {
        mu: -9.0,
        phi: 0.97,
        sigma_eta: 0.15,
    };
    let (returns, _) = simulate(params, n - 1, &mut rng_from(seed));
    let mut p = 100.0;
    let mut closes = vec![p];
    for r in returns {
        p *= r.exp();
        closes.push(p);
    }
    PriceSeries::new(business_days(n), closes).unwrap()
}

pub fn prices_csv(prices: &PriceSeries) -> String {
    let mut s = String::from("date,close\n");
    for (d, c) in prices.dates().iter().zip(prices.closes()) {
        s.push_str(&format!("{},{}\n", d.format(DATE_FORMAT), c));
    }
    s
}

pub fn tiny_hyperparams() -> HyperParams {
    HyperParams {
        lstm: vec![LstmSpec {
            units: 3,
            activation: Activation::Tanh,
            recurrent_dropout: 0.0,
        }],
        dense: vec![DenseSpec {
            units: 2,
            activation: Activation::Tanh,
        }],
        dropout: 0.0,
        learning_rate: 0.05,
        loss: LossKind::Mse,
    }
}

/// A fast plan on a few hundred rows: short windows, a cheap sampler and a
/// two-trial search over tiny networks.
pub fn small_config(model: ModelKind, lookback: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::from_toml_str("[data]\nprices = \"unused.csv\"\n").unwrap();
    c.plan.model = model;
    c.plan.lookback = lookback;
    c.plan.seed = 11;
    c.windows = WindowPlan {
        train_days: 120,
        val_days: 60,
        test_days: 30,
        step_days: 30,
    };
    c.sv.train_len = 60;
    c.sv.sampler.n_iter = 120;
    c.sv.sampler.n_burnin = 20;
    c.tuning.n_trials = 2;
    c.tuning.executions_per_trial = 1;
    c.tuning.max_epochs = 3;
    c.tuning.patience = 2;
    c.tuning.final_epochs = 4;
    c.tuning.final_patience = 2;
    c.tuning.space = HyperSpace {
        lstm_layers: vec![1],
        dense_layers: vec![0, 1],
        units: vec![3],
        learning_rates: vec![0.01, 0.05],
        activations: vec![Activation::Tanh, Activation::Sigmoid],
        recurrent_dropouts: vec![0.0, 0.1],
        dropouts: vec![0.0],
        losses: vec![LossKind::Mse, LossKind::Mae],
    };
    c
}

pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Ten trading days, VXF4 settling at 14.0 on 2024-01-08 (the fifth day), a
/// long-to-short flip on 2024-01-10, 25% allocation and 0.1% costs.
pub fn backtest_fixture() -> (volcast::backtest::FuturesSeries, volcast::backtest::SignalSeries) {
    use volcast::backtest::{load_futures, signals_from_forecasts};
    let futures = load_futures(&fixture_path("futures.csv"), &fixture_path("settlements.csv")).unwrap();
    let forecasts = volcast::pipeline::load_forecasts(&fixture_path("forecasts.csv")).unwrap();
    (futures, signals_from_forecasts(&forecasts).unwrap())
}

/// Hand-computed equity after each of the fixture's ten days.
pub fn backtest_fixture_equity() -> Vec<f64> {
    let a = 0.25;
    let fee = 0.001 * a;
    let steps: [(f64, f64); 10] = [
        (0.0, 1.0 - fee),                           // open long VXF4 at 12.0
        (12.6 / 12.0 - 1.0, 1.0),
        (13.2 / 12.6 - 1.0, 1.0),
        (12.9 / 13.2 - 1.0, 1.0),
        (14.0 / 12.9 - 1.0, 1.0 - 2.0 * fee),       // settle VXF4, open VXG4 at 15.0
        (15.6 / 15.0 - 1.0, 1.0),
        (15.3 / 15.6 - 1.0, 1.0 - 2.0 * fee),       // flip to short at 15.3
        (-(14.7 / 15.3 - 1.0), 1.0),
        (-(14.0 / 14.7 - 1.0), 1.0),
        (-(14.35 / 14.0 - 1.0), 1.0),
    ];
    let mut e = 1000.0;
    steps
        .iter()
        .map(|&(r, keep)| {
            e = e * (1.0 + a * r) * keep;
            e
        })
        .collect()
}
