#![no_main]

use libfuzzer_sys::fuzz_target;
use volcast::pipeline::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ExperimentConfig::from_toml_str(text) {
        let _ = cfg.problems();
        if let Ok(out) = cfg.to_toml_string() {
            let again = ExperimentConfig::from_toml_str(&out).expect("re-parse");
            assert_eq!(again.plan, cfg.plan);
        }
    }
});
