//! Pricing noisy count queries over personal data.
//!
//! Owners state how much privacy loss they tolerate and how they want to be
//! paid for it. A buyer names a count query and a price; the market maker
//! buys privacy loss from a representative sample of owners within that
//! price, perturbs the answer so that each owner's loss stays within what was
//! bought, and pays the owners.

// `!(x > y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod dataset_io;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod mechanism;
pub mod model;
pub mod payment;
pub mod query;
pub mod sampling;
pub mod seed;
pub mod store;
pub mod trading;

pub use error::{Error, ErrorKind, Result};
pub use model::{AttrValue, Column, ColumnKind, DataOwner, Dataset, OwnerId, Schema};
pub use payment::{epsilon_of, price_of, Money, PaymentScheme};
pub use query::{canonical_query_key, evaluate_query, CountQuery, QueryKey};
pub use trading::{Mechanism, TradeConfig, TradeLedger, TradeReceipt, TradeRequest};
