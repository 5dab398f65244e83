#![no_main]

use libfuzzer_sys::fuzz_target;
use volcast::marketdata::{log_returns, parse_prices, PriceColumns};

fuzz_target!(|data: &[u8]| {
    if let Ok(prices) = parse_prices(data, &PriceColumns::default()) {
        assert!(prices.closes().iter().all(|&c| c > 0.0 && c.is_finite()));
        assert!(prices.dates().windows(2).all(|w| w[0] < w[1]));
        let _ = log_returns(&prices);
    }
});
