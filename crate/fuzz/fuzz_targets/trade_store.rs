#![no_main]

use libfuzzer_sys::fuzz_target;
use pdmarket::store::{ledger_from_receipts, parse_store};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(receipts) = parse_store(text) {
        let _ = ledger_from_receipts(&receipts);
    }
});
