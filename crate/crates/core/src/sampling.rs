//! Representative-sample sizing with finite-population correction, and
//! seeded draws of candidate subsets.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::seed::child_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Population variance proxy, `p(1-p)`.
    pub dt: f64,
    /// Confidence z-score.
    pub cls: f64,
    /// Margin of error as a fraction.
    pub mer: f64,
    /// Number of candidate subsets.
    pub h: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { dt: 0.25, cls: 1.96, mer: 0.05, h: 10 }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::domain(format!("DT must be positive, got {}", self.dt)));
        }
        if !(self.cls > 0.0 && self.cls.is_finite()) {
            return Err(Error::domain(format!("CLS must be positive, got {}", self.cls)));
        }
        if !(self.mer > 0.0 && self.mer < 1.0) {
            return Err(Error::domain(format!("MER must lie in (0, 1), got {}", self.mer)));
        }
        if self.h == 0 {
            return Err(Error::domain("h must be at least 1"));
        }
        Ok(())
    }

    /// Infinite-population sample size `DT·CLS²/MER²`.
    pub fn base_size(&self) -> f64 {
        self.dt * self.cls * self.cls / (self.mer * self.mer)
    }
}

/// A candidate subset, stored as positions into the dataset's owner list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subset {
    pub members: Vec<usize>,
}

impl Subset {
    pub fn new(members: Vec<usize>) -> Self {
        Subset { members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// `ceil(SS·N/(SS + N − 1))`, clamped to `[1, N]`.
pub fn representative_size(population: usize, cfg: &SamplingConfig) -> Result<usize> {
    if population == 0 {
        return Err(Error::domain("population must be at least 1"));
    }
    cfg.validate()?;
    let ss = cfg.base_size();
    let n = population as f64;
    let raw = ss * n / (ss + n - 1.0);
    // absorb rounding noise when the exact value is integral
    let size = (raw - 1e-9).ceil() as usize;
    Ok(size.clamp(1, population))
}

/// Draws `h` subsets of `size` distinct owners each. Subset `k` is drawn from
/// its own stream keyed by `(seed, k)`.
pub fn draw_subsets(dataset: &Dataset, size: usize, h: usize, seed: u64) -> Result<Vec<Subset>> {
    let population = dataset.len();
    if size > population {
        return Err(Error::Infeasible(format!("sample size {size} exceeds the {population} available owners")));
    }
    Ok((0..h).into_par_iter().map(|k| draw_one(population, size, seed, k)).collect())
}

pub(crate) fn draw_one(population: usize, size: usize, seed: u64, k: usize) -> Subset {
    let mut rng = child_rng(seed, "subset", &[k as u64]);
    Subset::new(index::sample(&mut rng, population, size).into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DataOwner, Schema};
    use crate::payment::PaymentScheme;
    use std::collections::HashSet;

    fn owners(n: usize) -> Dataset {
        let owners =
            (0..n).map(|i| DataOwner::new(i as u64, vec![], 0.5, PaymentScheme::TypeB, 1.0).unwrap()).collect();
        Dataset::new(Schema::default(), owners, "test").unwrap()
    }

    #[test]
    fn sizes() {
        let cfg = SamplingConfig::default();
        assert_eq!(representative_size(243_000, &cfg).unwrap(), 384);
        assert_eq!(representative_size(100, &cfg).unwrap(), 80);
        assert_eq!(representative_size(1, &cfg).unwrap(), 1);
        let odd = SamplingConfig { dt: 0.1, cls: 3.0, mer: 0.5, h: 1 };
        assert_eq!(representative_size(1, &odd).unwrap(), 1);
        assert!(representative_size(0, &cfg).is_err());
        for n in 1..500 {
            let s = representative_size(n, &cfg).unwrap();
            assert!(s >= 1 && s <= n);
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            SamplingConfig { dt: 0.0, ..Default::default() },
            SamplingConfig { cls: -1.0, ..Default::default() },
            SamplingConfig { mer: 1.0, ..Default::default() },
            SamplingConfig { h: 0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn full_draw_is_everyone() {
        let ds = owners(12);
        for s in draw_subsets(&ds, 12, 3, 5).unwrap() {
            let set: HashSet<_> = s.members.iter().copied().collect();
            assert_eq!(set, (0..12).collect());
        }
    }

    #[test]
    fn deterministic_and_order_independent() {
        let ds = owners(200);
        let a = draw_subsets(&ds, 30, 6, 99).unwrap();
        assert_eq!(a, draw_subsets(&ds, 30, 6, 99).unwrap());
        for (k, s) in a.iter().enumerate().rev() {
            assert_eq!(*s, draw_one(200, 30, 99, k));
            let set: HashSet<_> = s.members.iter().collect();
            assert_eq!(set.len(), 30);
            assert!(s.members.iter().all(|&m| m < 200));
        }
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn oversized_draw_is_infeasible() {
        assert!(matches!(draw_subsets(&owners(3), 4, 1, 0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn single_draws_are_uniform() {
        let ds = owners(4);
        let draws = 10_000;
        let mut counts = [0usize; 4];
        for k in 0..draws {
            counts[draw_one(ds.len(), 1, 2024, k).members[0]] += 1;
        }
        let p = 0.25;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }
}
