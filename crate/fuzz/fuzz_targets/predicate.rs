#![no_main]

use libfuzzer_sys::fuzz_target;
use pdmarket::CountQuery;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(query) = CountQuery::parse(text) else {
        return;
    };
    // The canonical key must itself parse back to the same key.
    let key = query.key();
    let again = CountQuery::parse(key.as_str()).expect("canonical key parses");
    assert_eq!(again.key(), key);
});
