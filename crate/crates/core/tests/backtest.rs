mod common;

use common::{backtest_fixture, backtest_fixture_equity};
use volcast::backtest::{benchmark, simulate, strategy_stats, BacktestConfig, BenchmarkKind};

#[test]
fn hand_fixture_equity_path() {
    let (futures, signals) = backtest_fixture();
    assert_eq!(signals.len(), 10);
    assert_eq!(signals.flips(), 1);
    let ledger = simulate(&futures, &signals, &BacktestConfig::default()).unwrap();
    let expected = backtest_fixture_equity();
    for (r, e) in ledger.records.iter().zip(&expected) {
        assert!((r.equity - e).abs() < 1e-9, "{}: {} vs {}", r.date, r.equity, e);
    }
    assert_eq!(ledger.records.iter().filter(|r| r.rolled).count(), 1);
    assert_eq!(ledger.total_cost_events(), 5);
    let stats = strategy_stats(&ledger).unwrap();
    let total = (expected[9] / 1000.0 - 1.0) * 100.0;
    assert!((stats.total_return_percent - total).abs() < 1e-9);
}

#[test]
fn benchmarks_are_mirror_images_before_costs() {
    let (futures, signals) = backtest_fixture();
    let cfg = BacktestConfig::default();
    let long = benchmark(BenchmarkKind::LongOnly, &futures, &signals.dates, &cfg).unwrap();
    let short = benchmark(BenchmarkKind::ShortOnly, &futures, &signals.dates, &cfg).unwrap();
    for (l, s) in long.records.iter().zip(&short.records) {
        assert_eq!(l.position_return, -s.position_return);
        assert_eq!(l.cost_events, s.cost_events);
    }
}

#[test]
fn zero_cost_beats_paid_cost() {
    let (futures, signals) = backtest_fixture();
    let paid = simulate(&futures, &signals, &BacktestConfig::default()).unwrap();
    let free = simulate(&futures, &signals, &BacktestConfig { cost_rate: 0.0, ..Default::default() }).unwrap();
    assert!(free.final_equity() > paid.final_equity());
}
