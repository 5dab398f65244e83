#![no_main]

use libfuzzer_sys::fuzz_target;
use volcast::pipeline::output::{forecasts_to_csv, parse_forecasts};

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_forecasts(data) {
        let again = parse_forecasts(forecasts_to_csv(&rows).as_bytes()).expect("re-parse");
        assert_eq!(rows, again);
    }
});
