#![no_main]

use libfuzzer_sys::fuzz_target;
use volcast::neuralnet::serialize::from_json;
use volcast::neuralnet::Matrix;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // accepted networks are shape-checked, so a forward pass must not panic
    if let Ok(saved) = from_json(text) {
        let net = saved.network;
        net.forward(&Matrix::zeros(3, net.input_dim)).expect("validated shapes");
    }
});
