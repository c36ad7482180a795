//! Turning an available budget into per-owner privacy purchases.
//!
//! When the candidate subset can be bought outright, every member is paid for
//! its full `ε̂` and the leftover money recruits further random owners, the
//! last one possibly at a partial price. Otherwise the budget is waterfilled:
//! owners whose full price fits under the equal-share level are finalized at
//! full price, the rest share what remains at a common level.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Dataset, OwnerId};
use crate::payment::{epsilon_of, Money, MONEY_TOL};
use crate::sampling::Subset;
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct OwnerAllocation {
    /// Position of the owner in the dataset.
    pub index: usize,
    pub owner: OwnerId,
    pub eps_bought: f64,
    pub payment: Money,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Full prices fit the budget; the subset may have grown.
    UnderBudget,
    /// Budget waterfilled across the original subset.
    OverBudget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetAllocation {
    pub allocations: Vec<OwnerAllocation>,
    /// `W_p`, money paid to owners.
    pub total_paid: Money,
    /// `W_r`, money left unspent.
    pub remaining: Money,
    /// `w̄`, mean compensation per allocated owner.
    pub mean_payment: Money,
    pub branch: Branch,
    /// Waterfilling finalization rounds (zero for the under-budget branch).
    pub rounds: usize,
}

impl SubsetAllocation {
    fn from_parts(allocations: Vec<OwnerAllocation>, budget: Money, branch: Branch, rounds: usize) -> Self {
        let total_paid: Money = allocations.iter().map(|a| a.payment).sum();
        let remaining = match branch {
            Branch::UnderBudget => (budget - total_paid).max(0.0),
            Branch::OverBudget => 0.0,
        };
        let mean_payment = if allocations.is_empty() { 0.0 } else { total_paid / allocations.len() as f64 };
        SubsetAllocation { allocations, total_paid, remaining, mean_payment, branch, rounds }
    }

    pub fn len(&self) -> usize {
        self.allocations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allocations.is_empty()
    }

    /// Mean purchased privacy loss `ε̄`.
    pub fn mean_eps(&self) -> f64 {
        if self.allocations.is_empty() {
            return 0.0;
        }
        self.allocations.iter().map(|a| a.eps_bought).sum::<f64>() / self.allocations.len() as f64
    }
}

/// Cost of buying every member's full `ε̂`.
pub fn full_price(subset: &Subset, dataset: &Dataset) -> Money {
    subset.members.iter().map(|&i| dataset.owner(i).full_price()).sum()
}

fn full_allocation(dataset: &Dataset, index: usize) -> OwnerAllocation {
    let owner = dataset.owner(index);
    OwnerAllocation { index, owner: owner.id, eps_bought: owner.eps_max, payment: owner.full_price() }
}

fn partial_allocation(dataset: &Dataset, index: usize, payment: Money) -> Result<OwnerAllocation> {
    let owner = dataset.owner(index);
    let eps = epsilon_of(owner.scheme, payment)?.min(owner.eps_max);
    Ok(OwnerAllocation { index, owner: owner.id, eps_bought: eps, payment })
}

fn check_budget(budget: Money) -> Result<()> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::Budget(format!("available budget must be positive, got {budget}")));
    }
    Ok(())
}

/// Under-budget branch: pay everyone in full, then spend the rest recruiting
/// uniformly random outsiders until the money or the dataset runs out.
pub fn allocate_underbudget(subset: &Subset, dataset: &Dataset, budget: Money, seed: u64) -> Result<SubsetAllocation> {
    check_budget(budget)?;
    let base = full_price(subset, dataset);
    if base > budget {
        return Err(Error::Branch(format!("full price {base} exceeds the budget {budget}")));
    }
    let population = dataset.len();
    let mut taken = vec![false; population];
    let mut allocations = Vec::with_capacity(subset.len());
    for &i in &subset.members {
        if std::mem::replace(&mut taken[i], true) {
            return Err(Error::domain(format!("owner position {i} appears twice in the subset")));
        }
        allocations.push(full_allocation(dataset, i));
    }

    let mut rng = rng_from_seed(seed);
    let mut left = budget - base;
    while left > MONEY_TOL && allocations.len() < population {
        let k = loop {
            let k = rng.random_range(0..population);
            if !taken[k] {
                break k;
            }
        };
        taken[k] = true;
        let full = dataset.owner(k).full_price();
        if full <= left {
            allocations.push(full_allocation(dataset, k));
            left -= full;
        } else {
            allocations.push(partial_allocation(dataset, k, left)?);
            left = 0.0;
        }
    }
    Ok(SubsetAllocation::from_parts(allocations, budget, Branch::UnderBudget, 0))
}

/// Over-budget branch: fixed-point waterfilling of `budget` over the subset.
pub fn allocate_overbudget(subset: &Subset, dataset: &Dataset, budget: Money) -> Result<SubsetAllocation> {
    check_budget(budget)?;
    let base = full_price(subset, dataset);
    if base <= budget {
        return Err(Error::Branch(format!("full price {base} fits the budget {budget}")));
    }

    let mut slots: Vec<Option<OwnerAllocation>> = vec![None; subset.len()];
    let mut active: Vec<usize> = (0..subset.len()).collect();
    let mut left = budget;
    let mut rounds = 0;
    while !active.is_empty() {
        let level = left / active.len() as f64;
        let before = active.len();
        active.retain(|&slot| {
            let index = subset.members[slot];
            let full = dataset.owner(index).full_price();
            if full <= level {
                slots[slot] = Some(full_allocation(dataset, index));
                left -= full;
                false
            } else {
                true
            }
        });
        if active.len() == before {
            for &slot in &active {
                slots[slot] = Some(partial_allocation(dataset, subset.members[slot], level)?);
            }
            break;
        }
        rounds += 1;
    }
    let allocations = slots.into_iter().map(|s| s.expect("every slot is settled")).collect();
    Ok(SubsetAllocation::from_parts(allocations, budget, Branch::OverBudget, rounds))
}

/// Dispatches on whether the subset's full price fits the budget.
pub fn allocate(subset: &Subset, dataset: &Dataset, budget: Money, seed: u64) -> Result<SubsetAllocation> {
    check_budget(budget)?;
    if subset.is_empty() {
        return Err(Error::domain("cannot allocate over an empty subset"));
    }
    if full_price(subset, dataset) <= budget {
        allocate_underbudget(subset, dataset, budget, seed)
    } else {
        allocate_overbudget(subset, dataset, budget)
    }
}
