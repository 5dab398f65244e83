#![no_main]

use libfuzzer_sys::fuzz_target;
use volcast::backtest::parse_futures;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_futures(data) {
        assert!(rows.iter().all(|r| r.close > 0.0 && !r.symbol.is_empty()));
    }
});
