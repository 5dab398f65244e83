#![no_main]

use libfuzzer_sys::fuzz_target;
use volcast::backtest::{parse_settlements, FuturesSeries};

fuzz_target!(|data: &[u8]| {
    if let Ok(contracts) = parse_settlements(data) {
        // construction must reject duplicates without panicking
        let _ = FuturesSeries::new(Vec::new(), contracts);
    }
});
