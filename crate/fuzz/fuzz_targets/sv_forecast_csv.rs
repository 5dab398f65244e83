#![no_main]

use libfuzzer_sys::fuzz_target;
use volcast::pipeline::output::parse_sv_forecasts;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_sv_forecasts(data) {
        assert!(rows.iter().all(|r| r.median_vol >= 0.0));
    }
});
