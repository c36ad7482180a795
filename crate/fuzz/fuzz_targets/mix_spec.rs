#![no_main]

use libfuzzer_sys::fuzz_target;
use pdmarket::ingest::MixSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(mix) = text.parse::<MixSpec>() {
        let total: f64 = mix.proportions().iter().sum();
        assert!((total - 1.0).abs() <= 1e-9);
    }
});
