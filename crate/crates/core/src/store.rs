//! Append-only trade store.
//!
//! One JSON object per line: a `receipt` line per settled trade (without its
//! compensation list) followed by one `compensation` line per paid owner.
//! Loading reassembles full receipts; the ledger is rebuilt from them.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::OwnerId;
use crate::payment::Money;
use crate::trading::{Compensation, TradeLedger, TradeReceipt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Receipt(TradeReceipt),
    Compensation { receipt_id: String, owner: OwnerId, payment: Money, eps_bought: f64 },
}

/// Parses store contents into receipts, in settlement order.
pub fn parse_store(text: &str) -> Result<Vec<TradeReceipt>> {
    let mut receipts: Vec<TradeReceipt> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(line).map_err(|e| Error::ParseAt { line: n as u64 + 1, message: e.to_string() })?;
        match record {
            Record::Receipt(mut r) => {
                if by_id.contains_key(&r.receipt_id) {
                    return Err(Error::ParseAt {
                        line: n as u64 + 1,
                        message: format!("duplicate receipt {}", r.receipt_id),
                    });
                }
                r.compensations.clear();
                by_id.insert(r.receipt_id.clone(), receipts.len());
                receipts.push(r);
            }
            Record::Compensation { receipt_id, owner, payment, eps_bought } => {
                let &i = by_id.get(&receipt_id).ok_or_else(|| Error::ParseAt {
                    line: n as u64 + 1,
                    message: format!("compensation for unknown receipt {receipt_id}"),
                })?;
                receipts[i].compensations.push(Compensation { owner, payment, eps_bought });
            }
        }
    }
    Ok(receipts)
}

/// Renders the lines [`TradeStore::settle`] appends for one receipt.
pub fn render_receipt(receipt: &TradeReceipt) -> String {
    let mut header = receipt.clone();
    header.compensations.clear();
    let mut out = serde_json::to_string(&Record::Receipt(header)).expect("receipts serialize");
    out.push('\n');
    for c in &receipt.compensations {
        let line = Record::Compensation {
            receipt_id: receipt.receipt_id.clone(),
            owner: c.owner,
            payment: c.payment,
            eps_bought: c.eps_bought,
        };
        out.push_str(&serde_json::to_string(&line).expect("compensations serialize"));
        out.push('\n');
    }
    out
}

pub fn ledger_from_receipts(receipts: &[TradeReceipt]) -> TradeLedger {
    let mut ledger = TradeLedger::new();
    for r in receipts {
        // a store never holds duplicates; parse_store rejects them
        let _ = ledger.record(&r.buyer, &r.query_key);
    }
    ledger
}

#[derive(Debug, Clone)]
pub struct TradeStore {
    path: PathBuf,
}

impl TradeStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        TradeStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn load(&self) -> Result<Vec<TradeReceipt>> {
        match std::fs::read_to_string(&self.path) {
            Ok(text) => parse_store(&text),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn ledger(&self) -> Result<TradeLedger> {
        Ok(ledger_from_receipts(&self.load()?))
    }

    /// Appends the receipt and its compensation lines. Returns `false` when a
    /// receipt with the same id is already stored.
    pub fn settle(&self, receipt: &TradeReceipt) -> Result<bool> {
        let existing: HashSet<String> = self.load()?.into_iter().map(|r| r.receipt_id).collect();
        if existing.contains(&receipt.receipt_id) {
            return Ok(false);
        }
        let block = render_receipt(receipt);
        let write = || -> io::Result<()> {
            let mut file: File = OpenOptions::new().create(true).append(true).open(&self.path)?;
            file.write_all(block.as_bytes())?;
            file.sync_data()
        };
        write().map_err(Error::Settlement)?;
        Ok(true)
    }
}
