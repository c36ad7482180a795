//! Price sweeps comparing the balanced mechanism with the baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::payment::Money;
use crate::query::CountQuery;
use crate::seed::child_seed;
use crate::trading::{quote, Mechanism, TradeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mechanism: Mechanism,
    pub price: Money,
    pub rep: usize,
    pub seed: u64,
    pub rmse: f64,
    pub eps_avg: f64,
    pub w_avg: Money,
    pub sample_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub prices: Vec<Money>,
    pub reps: usize,
    pub mechanisms: Vec<Mechanism>,
    /// Settings shared by every cell; each cell overrides the seed.
    pub config: TradeConfig,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.prices.is_empty() {
            return Err(Error::domain("the price grid is empty"));
        }
        if self.prices.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain(format!("the price grid must be strictly increasing, got {:?}", self.prices)));
        }
        if self.reps == 0 {
            return Err(Error::domain("repetitions must be at least 1"));
        }
        if self.mechanisms.is_empty() {
            return Err(Error::domain("no mechanisms to compare"));
        }
        Ok(())
    }
}

/// Seed of one sweep cell. Depends only on the cell's coordinates, so the
/// sweep gives the same rows however cells are scheduled.
pub fn cell_seed(master: u64, mechanism: Mechanism, price: Money, rep: usize) -> u64 {
    child_seed(master, mechanism.as_str(), &[price.to_bits(), rep as u64])
}

/// Runs every (mechanism, price, repetition) cell. Rows come back ordered by
/// mechanism, then price, then repetition.
pub fn run_comparison(dataset: &Dataset, query: &CountQuery, plan: &SweepPlan) -> Result<Vec<SweepRow>> {
    plan.validate()?;
    let cells: Vec<(Mechanism, Money, usize)> = plan
        .mechanisms
        .iter()
        .flat_map(|&m| plan.prices.iter().flat_map(move |&p| (0..plan.reps).map(move |r| (m, p, r))))
        .collect();
    let mut rows = cells
        .into_par_iter()
        .map(|(mechanism, price, rep)| {
            let seed = cell_seed(plan.config.seed, mechanism, price, rep);
            let cfg = TradeConfig { seed, ..plan.config.clone() };
            let q = quote(mechanism, dataset, query, price, &cfg)?;
            Ok(SweepRow {
                mechanism,
                price,
                rep,
                seed,
                rmse: q.rmse,
                eps_avg: q.eps_avg,
                w_avg: q.w_avg,
                sample_size: q.subset_size,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.mechanism.cmp(&b.mechanism).then(a.price.total_cmp(&b.price)).then(a.rep.cmp(&b.rep)));
    Ok(rows)
}

/// Median of a metric per price for one mechanism, in grid order.
pub fn median_by_price(
    rows: &[SweepRow],
    mechanism: Mechanism,
    metric: impl Fn(&SweepRow) -> f64,
) -> Vec<(Money, f64)> {
    let mut prices: Vec<Money> = rows.iter().filter(|r| r.mechanism == mechanism).map(|r| r.price).collect();
    prices.sort_by(f64::total_cmp);
    prices.dedup();
    prices
        .into_iter()
        .map(|p| {
            let values: Vec<f64> =
                rows.iter().filter(|r| r.mechanism == mechanism && r.price == p).map(&metric).collect();
            (p, median(&values))
        })
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}
