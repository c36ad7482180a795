#![no_main]

use libfuzzer_sys::fuzz_target;
use pdmarket::dataset_io::{parse_meta, parse_table, render_table};

// Input layout: sidecar JSON, a zero byte, then the CSV table.
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0) else {
        return;
    };
    let Ok(meta_text) = std::str::from_utf8(&data[..split]) else {
        return;
    };
    let Ok(meta) = parse_meta(meta_text) else {
        return;
    };
    let Ok(dataset) = parse_table(&meta, &data[split + 1..]) else {
        return;
    };
    let table = render_table(&dataset).expect("render");
    let again = parse_table(&meta, &table).expect("rendered table parses");
    assert_eq!(again, dataset);
});
