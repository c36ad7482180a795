//! Replays the checked-in fuzz corpus through the same checks the fuzz
//! targets make, so regressions show up without a fuzzing toolchain.

use std::path::PathBuf;

use pdmarket::dataset_io::{parse_meta, parse_table, render_table};
use pdmarket::ingest::{parse_survey, CategoricalAttribute, MixSpec};
use pdmarket::store::{ledger_from_receipts, parse_store};
use pdmarket::CountQuery;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn predicate_seeds() {
    for (name, data) in seeds("predicate") {
        let query = CountQuery::parse(text(&data)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let key = query.key();
        assert_eq!(CountQuery::parse(key.as_str()).unwrap().key(), key, "{name}");
    }
}

#[test]
fn survey_seeds() {
    for (name, data) in seeds("survey") {
        let parsed = parse_survey(data.as_slice(), "perturbation");
        assert_eq!(parsed.is_ok(), name != "bad_level", "{name}: {parsed:?}");
    }
}

#[test]
fn dataset_seeds() {
    for (name, data) in seeds("dataset") {
        let split = data.iter().position(|&b| b == 0).expect("separator");
        let meta = parse_meta(text(&data[..split])).unwrap();
        let table = &data[split + 1..];
        let dataset = parse_table(&meta, table).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(render_table(&dataset).unwrap(), table, "{name}");
    }
}

#[test]
fn trade_store_seeds() {
    for (name, data) in seeds("trade_store") {
        let receipts = parse_store(text(&data)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(ledger_from_receipts(&receipts).len(), receipts.len(), "{name}");
    }
}

#[test]
fn mix_and_attribute_seeds() {
    for (name, data) in seeds("mix_spec") {
        assert!(text(&data).parse::<MixSpec>().is_ok(), "{name}");
    }
    for (name, data) in seeds("attribute") {
        assert!(text(&data).parse::<CategoricalAttribute>().is_ok(), "{name}");
    }
}
