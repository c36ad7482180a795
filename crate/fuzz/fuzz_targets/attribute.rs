#![no_main]

use libfuzzer_sys::fuzz_target;
use pdmarket::ingest::CategoricalAttribute;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = text.parse::<CategoricalAttribute>();
});
