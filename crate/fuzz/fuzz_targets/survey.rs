#![no_main]

use libfuzzer_sys::fuzz_target;
use pdmarket::ingest::parse_survey;

fuzz_target!(|data: &[u8]| {
    let _ = parse_survey(data, "perturbation");
});
