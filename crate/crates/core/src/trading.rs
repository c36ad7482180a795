//! Trade orchestration: balanced and baseline trades, optimal-subset
//! selection, price menus and the once-per-query ledger.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::allocation::{allocate, SubsetAllocation};
use crate::error::{Error, Result};
use crate::mechanism::{exact_rmse, monte_carlo_rmse, pe_distribution, pe_sample, sample_laplace, scale_answer};
use crate::model::{Dataset, OwnerId};
use crate::payment::{epsilon_of, Money, MONEY_TOL};
use crate::query::{BoundQuery, CountQuery, QueryKey};
use crate::sampling::{draw_subsets, representative_size, SamplingConfig};
use crate::seed::{child_rng, child_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RmseMode {
    Exact,
    MonteCarlo,
}

impl FromStr for RmseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(RmseMode::Exact),
            "monte_carlo" | "monte-carlo" | "mc" => Ok(RmseMode::MonteCarlo),
            other => Err(Error::Parse(format!("unknown RMSE mode {other:?}"))),
        }
    }
}

/// How the baseline mechanism prices a trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Split the available budget equally over every owner.
    Budget,
    /// Pay every owner for the dataset-wide minimum `ε̂`; the price is an output.
    Spec,
}

impl FromStr for BaselineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "budget" => Ok(BaselineMode::Budget),
            "spec" => Ok(BaselineMode::Spec),
            other => Err(Error::Parse(format!("unknown baseline mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Balanced,
    Baseline,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Balanced => "balanced",
            Mechanism::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(Mechanism::Balanced),
            "baseline" => Ok(Mechanism::Baseline),
            other => Err(Error::Parse(format!("unknown mechanism {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeConfig {
    /// Market maker's flat profit `χ`.
    pub chi: Money,
    pub sampling: SamplingConfig,
    /// Internal perturbation runs `Φ` for Monte-Carlo RMSE.
    pub phi: usize,
    pub rmse_mode: RmseMode,
    pub baseline_mode: BaselineMode,
    pub seed: u64,
}

impl Default for TradeConfig {
    fn default() -> Self {
        TradeConfig {
            chi: 0.0,
            sampling: SamplingConfig::default(),
            phi: 1000,
            rmse_mode: RmseMode::Exact,
            baseline_mode: BaselineMode::Budget,
            seed: 0,
        }
    }
}

impl TradeConfig {
    /// Available budget `W_ab = W_max − χ`.
    pub fn available_budget(&self, budget: Money) -> Result<Money> {
        if !(self.chi >= 0.0 && self.chi.is_finite()) {
            return Err(Error::Budget(format!("market-maker profit must be non-negative, got {}", self.chi)));
        }
        if !(budget.is_finite() && budget > self.chi) {
            return Err(Error::Budget(format!("budget {budget} does not exceed the market-maker profit {}", self.chi)));
        }
        if self.phi == 0 {
            return Err(Error::domain("phi must be at least 1"));
        }
        Ok(budget - self.chi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeRequest {
    pub buyer: String,
    pub query: CountQuery,
    /// `W_max`.
    pub budget: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compensation {
    pub owner: OwnerId,
    pub payment: Money,
    pub eps_bought: f64,
}

/// Result of pricing and perturbing a query, before any buyer bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Quote {
    pub mechanism: Mechanism,
    pub answer: f64,
    pub true_answer: f64,
    /// `W_p`.
    pub paid: Money,
    /// `W_r`.
    pub remaining: Money,
    pub subset_size: usize,
    pub rmse: f64,
    pub eps_avg: f64,
    pub w_avg: Money,
    pub compensations: Vec<Compensation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeReceipt {
    pub receipt_id: String,
    pub buyer: String,
    pub query_key: QueryKey,
    pub mechanism: Mechanism,
    pub seed: u64,
    /// `W_max`.
    pub budget: Money,
    pub answer: f64,
    /// `W_p`.
    pub paid: Money,
    pub chi: Money,
    /// `W_r`.
    pub remaining: Money,
    pub subset_size: usize,
    pub rmse: f64,
    pub eps_avg: f64,
    pub w_avg: Money,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compensations: Vec<Compensation>,
}

impl TradeReceipt {
    fn new(request: &TradeRequest, key: QueryKey, cfg: &TradeConfig, quote: Quote) -> Self {
        TradeReceipt {
            receipt_id: receipt_id(&request.buyer, &key),
            buyer: request.buyer.clone(),
            query_key: key,
            mechanism: quote.mechanism,
            seed: cfg.seed,
            budget: request.budget,
            answer: quote.answer,
            paid: quote.paid,
            chi: cfg.chi,
            remaining: quote.remaining,
            subset_size: quote.subset_size,
            rmse: quote.rmse,
            eps_avg: quote.eps_avg,
            w_avg: quote.w_avg,
            compensations: quote.compensations,
        }
    }

    /// `W_max − (W_p + χ + W_r)`.
    pub fn budget_gap(&self) -> Money {
        self.budget - (self.paid + self.chi + self.remaining)
    }
}

/// Stable identifier of a (buyer, query) purchase.
pub fn receipt_id(buyer: &str, key: &QueryKey) -> String {
    let mut h = Sha256::new();
    h.update(buyer.as_bytes());
    h.update([0u8]);
    h.update(key.as_str().as_bytes());
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Append-only record of which buyer has bought which query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TradeLedger {
    entries: BTreeSet<(String, QueryKey)>,
}

impl TradeLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, buyer: &str, key: &QueryKey) -> bool {
        self.entries.contains(&(buyer.to_owned(), key.clone()))
    }

    pub fn check(&self, buyer: &str, key: &QueryKey) -> Result<()> {
        if self.contains(buyer, key) {
            return Err(Error::Arbitrage { buyer: buyer.to_owned(), query_key: key.to_string() });
        }
        Ok(())
    }

    pub fn record(&mut self, buyer: &str, key: &QueryKey) -> Result<()> {
        if !self.entries.insert((buyer.to_owned(), key.clone())) {
            return Err(Error::Arbitrage { buyer: buyer.to_owned(), query_key: key.to_string() });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-candidate summary used to pick the released subset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub eps_avg: f64,
    pub rmse: f64,
    pub w_avg: Money,
}

/// Index of the candidate with the largest `ε̄`; ties go to the smaller RMSE,
/// then to the lower index.
pub fn select_optimal_subset(candidates: &[Candidate]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::domain("no candidate subsets to choose from"));
    }
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate().skip(1) {
        let b = &candidates[best];
        if c.eps_avg > b.eps_avg || (c.eps_avg == b.eps_avg && c.rmse < b.rmse) {
            best = i;
        }
    }
    Ok(best)
}

fn bound_nonempty<'q>(dataset: &Dataset, query: &'q CountQuery) -> Result<BoundQuery<'q>> {
    if dataset.is_empty() {
        return Err(Error::Infeasible("the dataset has no owners".into()));
    }
    query.bind(dataset)
}

struct Evaluated {
    allocation: SubsetAllocation,
    dist: crate::mechanism::PeDistribution,
    candidate: Candidate,
}

/// Balanced mechanism without ledger side effects: sample, allocate, perturb
/// every candidate, then release one draw from the best.
pub fn quote_balanced(dataset: &Dataset, query: &CountQuery, budget: Money, cfg: &TradeConfig) -> Result<Quote> {
    let available = cfg.available_budget(budget)?;
    let bound = bound_nonempty(dataset, query)?;
    let population = dataset.len();
    let true_answer = bound.count(dataset) as f64;
    let size = representative_size(population, &cfg.sampling)?;
    let subsets = draw_subsets(dataset, size, cfg.sampling.h, cfg.seed)?;

    let evaluated = subsets
        .par_iter()
        .enumerate()
        .map(|(k, subset)| {
            let allocation = allocate(subset, dataset, available, child_seed(cfg.seed, "alloc", &[k as u64]))?;
            let flags: Vec<bool> = allocation.allocations.iter().map(|a| bound.flag(dataset, a.index)).collect();
            let eps: Vec<f64> = allocation.allocations.iter().map(|a| a.eps_bought).collect();
            let dist = pe_distribution(&flags, &eps)?;
            let n = allocation.len();
            let rmse = match cfg.rmse_mode {
                RmseMode::Exact => exact_rmse(&dist, population, n, true_answer),
                RmseMode::MonteCarlo => monte_carlo_rmse(
                    &dist,
                    population,
                    n,
                    true_answer,
                    cfg.phi,
                    child_seed(cfg.seed, "rmse", &[k as u64]),
                )?,
            };
            let candidate = Candidate { eps_avg: allocation.mean_eps(), rmse, w_avg: allocation.mean_payment };
            Ok(Evaluated { allocation, dist, candidate })
        })
        .collect::<Result<Vec<_>>>()?;

    let candidates: Vec<Candidate> = evaluated.iter().map(|e| e.candidate).collect();
    let best = &evaluated[select_optimal_subset(&candidates)?];
    let n = best.allocation.len();
    let raw = pe_sample(&best.dist, child_seed(cfg.seed, "release", &[]));
    Ok(Quote {
        mechanism: Mechanism::Balanced,
        answer: scale_answer(raw, population, n),
        true_answer,
        paid: best.allocation.total_paid,
        remaining: best.allocation.remaining,
        subset_size: n,
        rmse: best.candidate.rmse,
        eps_avg: best.candidate.eps_avg,
        w_avg: best.candidate.w_avg,
        compensations: best
            .allocation
            .allocations
            .iter()
            .map(|a| Compensation { owner: a.owner, payment: a.payment, eps_bought: a.eps_bought })
            .collect(),
    })
}

/// Baseline mechanism over the whole dataset with Laplace noise of scale
/// `1/min ε`.
pub fn quote_baseline(dataset: &Dataset, query: &CountQuery, budget: Money, cfg: &TradeConfig) -> Result<Quote> {
    let available = cfg.available_budget(budget)?;
    let bound = bound_nonempty(dataset, query)?;
    let population = dataset.len();
    let true_answer = bound.count(dataset) as f64;

    let compensations = match cfg.baseline_mode {
        BaselineMode::Budget => {
            let share = available / population as f64;
            dataset
                .owners()
                .iter()
                .map(|o| {
                    let full = o.full_price();
                    if share >= full {
                        Ok(Compensation { owner: o.id, payment: full, eps_bought: o.eps_max })
                    } else {
                        let eps = epsilon_of(o.scheme, share)?.min(o.eps_max);
                        Ok(Compensation { owner: o.id, payment: share, eps_bought: eps })
                    }
                })
                .collect::<Result<Vec<_>>>()?
        }
        BaselineMode::Spec => {
            let eps_min = dataset.owners().iter().map(|o| o.eps_max).fold(f64::INFINITY, f64::min);
            dataset
                .owners()
                .iter()
                .map(|o| Compensation { owner: o.id, payment: o.scheme.eval(eps_min), eps_bought: eps_min })
                .collect()
        }
    };
    let paid: Money = compensations.iter().map(|c| c.payment).sum();
    // Summing one share per owner accumulates rounding proportional to the total.
    if paid > available + MONEY_TOL * available.max(1.0) * population as f64 {
        return Err(Error::Budget(format!("baseline price {paid} exceeds the available budget {available}")));
    }
    let eps_min = compensations.iter().map(|c| c.eps_bought).fold(f64::INFINITY, f64::min);
    if !(eps_min > 0.0) {
        return Err(Error::Budget("budget buys no privacy loss from some owner".into()));
    }
    let scale = 1.0 / eps_min;
    let rmse = match cfg.rmse_mode {
        RmseMode::Exact => std::f64::consts::SQRT_2 * scale,
        RmseMode::MonteCarlo => {
            let mut rng = child_rng(cfg.seed, "rmse", &[]);
            let sum_sq: f64 = (0..cfg.phi).map(|_| sample_laplace(&mut rng, scale).powi(2)).sum();
            (sum_sq / cfg.phi as f64).sqrt()
        }
    };
    let noise = sample_laplace(&mut child_rng(cfg.seed, "release", &[]), scale);
    let eps_avg = compensations.iter().map(|c| c.eps_bought).sum::<f64>() / population as f64;
    Ok(Quote {
        mechanism: Mechanism::Baseline,
        answer: true_answer + noise,
        true_answer,
        paid,
        remaining: (available - paid).max(0.0),
        subset_size: population,
        rmse,
        eps_avg,
        w_avg: paid / population as f64,
        compensations,
    })
}

pub fn quote(
    mechanism: Mechanism,
    dataset: &Dataset,
    query: &CountQuery,
    budget: Money,
    cfg: &TradeConfig,
) -> Result<Quote> {
    match mechanism {
        Mechanism::Balanced => quote_balanced(dataset, query, budget, cfg),
        Mechanism::Baseline => quote_baseline(dataset, query, budget, cfg),
    }
}

/// Runs a trade end to end. The ledger is checked before any computation and
/// the purchase recorded only once the trade has succeeded.
pub fn execute_trade(
    mechanism: Mechanism,
    dataset: &Dataset,
    request: &TradeRequest,
    cfg: &TradeConfig,
    ledger: &mut TradeLedger,
) -> Result<TradeReceipt> {
    let key = request.query.key();
    ledger.check(&request.buyer, &key)?;
    cfg.available_budget(request.budget)?;
    let q = quote(mechanism, dataset, &request.query, request.budget, cfg)?;
    ledger.record(&request.buyer, &key)?;
    Ok(TradeReceipt::new(request, key, cfg, q))
}

pub fn execute_trade_balanced(
    dataset: &Dataset,
    request: &TradeRequest,
    cfg: &TradeConfig,
    ledger: &mut TradeLedger,
) -> Result<TradeReceipt> {
    execute_trade(Mechanism::Balanced, dataset, request, cfg, ledger)
}

pub fn execute_trade_baseline(
    dataset: &Dataset,
    request: &TradeRequest,
    cfg: &TradeConfig,
    ledger: &mut TradeLedger,
) -> Result<TradeReceipt> {
    execute_trade(Mechanism::Baseline, dataset, request, cfg, ledger)
}

/// Builds a receipt without touching any ledger (dry runs).
pub fn preview_trade(
    mechanism: Mechanism,
    dataset: &Dataset,
    request: &TradeRequest,
    cfg: &TradeConfig,
) -> Result<TradeReceipt> {
    let q = quote(mechanism, dataset, &request.query, request.budget, cfg)?;
    Ok(TradeReceipt::new(request, request.query.key(), cfg, q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MenuRow {
    pub price: Money,
    pub eps_avg: f64,
    pub sample_size: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PriceMenu {
    pub rows: Vec<MenuRow>,
}

/// Simulates the balanced mechanism at each candidate price and keeps the
/// rows whose `ε̄` does not fall below a cheaper row's.
pub fn generate_price_menu(
    dataset: &Dataset,
    query: &CountQuery,
    prices: &[Money],
    cfg: &TradeConfig,
) -> Result<PriceMenu> {
    let mut sorted = prices.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    for &p in &sorted {
        if !(p > 0.0) {
            return Err(Error::Budget(format!("menu prices must be positive, got {p}")));
        }
        cfg.available_budget(p)?;
    }
    let simulated = sorted
        .par_iter()
        .map(|&price| {
            let q = quote_balanced(dataset, query, price, cfg)?;
            Ok(MenuRow { price, eps_avg: q.eps_avg, sample_size: q.subset_size })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<MenuRow> = Vec::with_capacity(simulated.len());
    for row in simulated {
        if rows.last().is_none_or(|last| row.eps_avg >= last.eps_avg) {
            rows.push(row);
        }
    }
    Ok(PriceMenu { rows })
}
