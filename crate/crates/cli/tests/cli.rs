use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Datelike, Days, NaiveDate, Weekday};
use volcast::seed::rng_from;
use volcast::svmodel::{simulate, SvParams};

fn volcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volcast")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> Output {
    let o = volcast(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    o
}

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_prices(path: &Path, n: usize, seed: u64) -> Vec<f64> {
    let params = SvParams {
        mu: -9.0,
        phi: 0.97,
        sigma_eta: 0.15,
    };
    let (returns, _) = simulate(params, n - 1, &mut rng_from(seed));
    let mut closes = vec![100.0];
    for r in returns {
        closes.push(closes.last().unwrap() * r.exp());
    }
    let mut d = NaiveDate::from_ymd_opt(2010, 1, 4).unwrap();
    let mut text = String::from("date,close\n");
    for c in &closes {
        while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            d = d + Days::new(1);
        }
        text.push_str(&format!("{d},{c}\n"));
        d = d + Days::new(1);
    }
    std::fs::write(path, text).unwrap();
    closes
}

fn csv_column(path: &Path, col: usize) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

const SMALL_PLAN: &str = r#"
[data]
prices = "prices.csv"

[plan]
model = "sv"
lookback = 5
seed = 3

[windows]
train_days = 120
val_days = 60
test_days = 30
step_days = 30

[sv]
train_len = 60

[sv.sampler]
n_iter = 120
n_burnin = 20

[tuning]
final_epochs = 3
final_patience = 2

[hyperparams]
dropout = 0.0
learning_rate = 0.05
loss = "mse"
dense = []

[[hyperparams.lstm]]
units = 3
activation = "tanh"
recurrent_dropout = 0.0
"#;

#[test]
fn data_writes_returns_and_volatility() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("prices.csv");
    let closes = write_prices(&prices, 80, 1);
    let out = dir.path().join("data");
    ok(&["data", "--input", s(&prices), "--out", s(&out), "--window", "21"]);

    let r = csv_column(&out.join("returns.csv"), 1);
    assert_eq!(r.len(), closes.len() - 1);
    for (k, x) in r.iter().enumerate() {
        assert!((x - (closes[k + 1] / closes[k]).ln()).abs() < 1e-15);
    }
    let vol = csv_column(&out.join("rolling_vol_21.csv"), 1);
    assert_eq!(vol.len(), r.len() - 20);
    for (k, v) in vol.iter().enumerate() {
        let w = &r[k..k + 21];
        let mean = w.iter().sum::<f64>() / 21.0;
        let sd = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 20.0).sqrt();
        assert!((v - sd).abs() < 1e-12, "{k}: {v} vs {sd}");
    }
    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["n_prices"], 80);
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("returns.csv") && manifest.contains("config_sha256"));
}

#[test]
fn data_settings_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    write_prices(&dir.path().join("prices.csv"), 60, 2);
    let cfg = dir.path().join("data.toml");
    std::fs::write(&cfg, "input = \"prices.csv\"\nout = \"derived\"\nwindow = 10\n").unwrap();
    ok(&["data", "--config", s(&cfg), "--window", "5"]);
    assert!(dir.path().join("derived/rolling_vol_5.csv").exists());
    assert!(!dir.path().join("derived/rolling_vol_10.csv").exists());
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = volcast(&["data", "--input", s(&dir.path().join("nope.csv")), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.csv"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(volcast(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(volcast(&["data", "--window", "x"]).status.code(), Some(1));
    assert_eq!(volcast(&["data"]).status.code(), Some(1));
    assert_eq!(volcast(&["--help"]).status.code(), Some(0));
}

fn plan_dir(extra: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    write_prices(&dir.path().join("prices.csv"), 330, 4);
    let cfg = dir.path().join("plan.toml");
    std::fs::write(&cfg, format!("{SMALL_PLAN}{extra}")).unwrap();
    (dir, cfg)
}

fn manifest_without_times(dir: &Path) -> serde_json::Value {
    let mut m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let obj = m.as_object_mut().unwrap();
    obj.remove("started_at");
    obj.remove("finished_at");
    m
}

#[test]
fn sv_forecast_run_is_reproducible() {
    let (dir, cfg) = plan_dir("");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["forecast", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["forecast", "--config", s(&cfg), "--out", s(&b)]);
    let preds = csv_column(&a.join("forecasts.csv"), 2);
    assert!(!preds.is_empty() && preds.iter().all(|&p| p > 0.0));
    assert_eq!(manifest_without_times(&a), manifest_without_times(&b));
    assert_eq!(std::fs::read(a.join("forecasts.csv")).unwrap(), std::fs::read(b.join("forecasts.csv")).unwrap());
    let m = manifest_without_times(&a);
    assert_eq!(m["seed"], 3);

    // the seed flag wins over the config and is recorded
    let c = dir.path().join("c");
    ok(&["forecast", "--config", s(&cfg), "--out", s(&c), "--seed", "99"]);
    assert_eq!(manifest_without_times(&c)["seed"], 99);
    assert_ne!(std::fs::read(a.join("forecasts.csv")).unwrap(), std::fs::read(c.join("forecasts.csv")).unwrap());
}

#[test]
fn lookback_changes_sequence_counts() {
    let (dir, cfg) = plan_dir("");
    for lookback in [5usize, 21] {
        let out = dir.path().join(format!("l{lookback}"));
        ok(&["forecast", "--config", s(&cfg), "--out", s(&out), "--model", "lstm", "--lookback", &lookback.to_string()]);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("window_0/report.json")).unwrap()).unwrap();
        assert_eq!(report["n_train_sequences"], 120 - lookback);
        assert_eq!(report["n_val_sequences"], 60 - lookback);
    }
}

#[test]
fn config_problems_are_listed_together() {
    let (dir, cfg) = plan_dir("");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("lookback = 5", "lookback = 0").replace("train_len = 60", "train_len = 2");
    std::fs::write(&cfg, text).unwrap();
    let o = volcast(&["forecast", "--config", s(&cfg), "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("plan.lookback") && err.contains("sv.train_len"), "{err}");
    assert!(!dir.path().join("x").exists());

    let o = volcast(&["forecast", "--config", s(&cfg), "--out", s(dir.path()), "--model", "garch"]);
    assert_eq!(o.status.code(), Some(1));
}

fn forecast_file(dir: &Path, name: &str, preds: &[f64]) -> PathBuf {
    let p = dir.join(name);
    let mut text = String::from("date,y_true,y_pred\n");
    let d0 = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
    for (i, y) in preds.iter().enumerate() {
        text.push_str(&format!("{},{},{y}\n", d0 + Days::new(i as u64), 1.0 + 0.1 * (i % 4) as f64));
    }
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn compare_reports_metrics_and_tests() {
    let dir = tempfile::tempdir().unwrap();
    let actual = |i: usize| 1.0 + 0.1 * (i % 4) as f64;
    let a: Vec<f64> = (0..40).map(|i| actual(i) + 0.05).collect();
    let b: Vec<f64> = (0..40).map(|i| actual(i) - if i % 2 == 0 { 0.1 } else { 0.02 }).collect();
    let c: Vec<f64> = (0..40).map(|i| actual(i) * 1.1).collect();
    let fa = forecast_file(dir.path(), "a.csv", &a);
    let fb = forecast_file(dir.path(), "b.csv", &b);
    let fc = forecast_file(dir.path(), "c.csv", &c);
    let out = dir.path().join("cmp");
    let o = ok(&["compare", s(&fa), s(&fb), s(&fc), "--out", s(&out)]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("a vs b") && text.contains("a vs c") && text.contains("b vs c"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(report["comparisons"].as_array().unwrap().len(), 3);
    let mse_a = report["models"][0][1]["mse"].as_f64().unwrap();
    let mae_b = report["models"][1][1]["mae"].as_f64().unwrap();
    assert!((mse_a - 0.0025).abs() < 1e-12);
    assert!((mae_b - 0.06).abs() < 1e-12);

    let o = ok(&["compare", s(&fa), s(&fa), "--names", "x,y"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("x vs y") && text.contains("degenerate"));
}

#[test]
fn compare_flags_misalignment() {
    let dir = tempfile::tempdir().unwrap();
    let fa = forecast_file(dir.path(), "a.csv", &[1.0; 20]);
    let fb = forecast_file(dir.path(), "b.csv", &[1.0; 15]);
    let o = volcast(&["compare", s(&fa), s(&fb)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("2021-03-16"), "{}", stderr(&o));
    assert_eq!(volcast(&["compare", s(&fa)]).status.code(), Some(1));
}

fn backtest_args<'a>(out: &'a Path, f: &'a Path, fu: &'a Path, st: &'a Path) -> Vec<&'a str> {
    vec!["backtest", "--forecasts", s(f), "--futures", s(fu), "--settlements", s(st), "--out", s(out)]
}

#[test]
fn backtest_fixture_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (f, fu, st) = (core_fixture("forecasts.csv"), core_fixture("futures.csv"), core_fixture("settlements.csv"));
    let out = dir.path().join("bt");
    let mut args = backtest_args(&out, &f, &fu, &st);
    args.push("--benchmarks");
    ok(&args);
    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    for name in ["strategy", "long_only", "short_only"] {
        for field in ["sharpe", "calmar", "arc_percent", "asd_percent", "max_drawdown_percent", "total_return_percent"] {
            assert!(stats[name].get(field).is_some(), "{name}.{field}");
        }
    }
    // hand-computed path: long 12 -> 14 (settled), long 15 -> 15.3, short 15.3 -> 14.35
    let fee = 0.00025;
    let long1 = (1.0 + 0.25 * (12.6 / 12.0 - 1.0)) * (1.0 + 0.25 * (13.2 / 12.6 - 1.0)) * (1.0 + 0.25 * (12.9 / 13.2 - 1.0)) * (1.0 + 0.25 * (14.0 / 12.9 - 1.0));
    let long2 = (1.0 + 0.25 * (15.6 / 15.0 - 1.0)) * (1.0 + 0.25 * (15.3 / 15.6 - 1.0));
    let short = (1.0 - 0.25 * (14.7 / 15.3 - 1.0)) * (1.0 - 0.25 * (14.0 / 14.7 - 1.0)) * (1.0 - 0.25 * (14.35 / 14.0 - 1.0));
    let total = (1.0 - fee) * (1.0 - 2.0 * fee) * (1.0 - 2.0 * fee) * long1 * long2 * short - 1.0;
    let got = stats["strategy"]["total_return_percent"].as_f64().unwrap();
    assert!((got - 100.0 * total).abs() < 1e-9, "{got} vs {}", 100.0 * total);
    assert_eq!(csv_column(&out.join("signals.csv"), 1).len(), 10);
    assert!(out.join("ledger_short_only.csv").exists());

    let free = dir.path().join("free");
    let mut args = backtest_args(&free, &f, &fu, &st);
    args.extend(["--cost-rate", "0"]);
    ok(&args);
    let eq = |p: &Path| *csv_column(&p.join("ledger.csv"), 12).last().unwrap();
    assert!(eq(&free) > eq(&out));
}

#[test]
fn backtest_coverage_gap() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(core_fixture("futures.csv")).unwrap();
    let cut: String = text.lines().filter(|l| !l.starts_with("2024-01-11") && !l.starts_with("2024-01-12")).map(|l| format!("{l}\n")).collect();
    let fu = dir.path().join("futures.csv");
    std::fs::write(&fu, cut).unwrap();
    let out = dir.path().join("bt");
    let o = volcast(&backtest_args(&out, &core_fixture("forecasts.csv"), &fu, &core_fixture("settlements.csv")));
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("2024-01-11") && err.contains("2024-01-12"), "{err}");
}
