//! Personalized-DP perturbation of count queries.
//!
//! The PE mechanism releases a count `r` with probability proportional to
//! `exp(d(r)/2)`, where `-d(r)` is the cheapest total privacy cost of flipping
//! records until the count becomes `r`. For counts that cost is a prefix sum
//! of the smallest `ε` in the group that has to flip, so the whole
//! distribution comes out of two sorted prefix-sum arrays. The baseline
//! minimum mechanism adds Laplace noise scaled to the smallest `ε`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::OwnerId;
use crate::seed::rng_from_seed;

/// Per-owner privacy parameters a mechanism must respect.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacySpec {
    entries: Vec<(OwnerId, f64)>,
}

impl PrivacySpec {
    pub fn new(entries: Vec<(OwnerId, f64)>) -> Result<Self> {
        if let Some((id, eps)) = entries.iter().find(|(_, e)| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::domain(format!("owner {id}: privacy parameter must be positive, got {eps}")));
        }
        Ok(PrivacySpec { entries })
    }

    /// Positional spec; owner `i` gets id `i`.
    pub fn from_eps(eps: &[f64]) -> Result<Self> {
        Self::new(eps.iter().enumerate().map(|(i, &e)| (i as OwnerId, e)).collect())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(OwnerId, f64)] {
        &self.entries
    }

    pub fn eps(&self) -> Vec<f64> {
        self.entries.iter().map(|&(_, e)| e).collect()
    }
}

/// Output distribution of the PE mechanism over raw counts `0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeDistribution {
    probs: Vec<f64>,
    true_count: usize,
}

impl PeDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn true_count(&self) -> usize {
        self.true_count
    }

    /// Subset size `n`; the support is `0..=n`.
    pub fn subset_size(&self) -> usize {
        self.probs.len() - 1
    }

    /// Expected raw count.
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(r, p)| r as f64 * p).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (r, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return r;
            }
        }
        // u landed in the rounding gap above the final cumulative sum
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(self.true_count)
    }
}

fn sorted_prefix_sums(mut eps: Vec<f64>) -> Vec<f64> {
    eps.sort_by(f64::total_cmp);
    let mut sums = Vec::with_capacity(eps.len() + 1);
    sums.push(0.0);
    let mut acc = 0.0;
    for e in eps {
        acc += e;
        sums.push(acc);
    }
    sums
}

/// Log-space normalization with max subtraction.
fn normalize_log_weights(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_w.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Builds the PE distribution for a subset given each member's predicate bit
/// and privacy parameter.
pub fn pe_distribution(flags: &[bool], eps: &[f64]) -> Result<PeDistribution> {
    if flags.is_empty() {
        return Err(Error::domain("PE mechanism needs at least one owner"));
    }
    if flags.len() != eps.len() {
        return Err(Error::domain(format!("{} flags but {} privacy parameters", flags.len(), eps.len())));
    }
    if let Some(bad) = eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::domain(format!("privacy parameters must be positive, got {bad}")));
    }
    let mut ones = Vec::new();
    let mut zeros = Vec::new();
    for (&f, &e) in flags.iter().zip(eps) {
        if f {
            ones.push(e)
        } else {
            zeros.push(e)
        }
    }
    let c = ones.len();
    let down = sorted_prefix_sums(ones);
    let up = sorted_prefix_sums(zeros);
    let n = flags.len();
    let log_w: Vec<f64> = (0..=n).map(|r| if r <= c { -down[c - r] / 2.0 } else { -up[r - c] / 2.0 }).collect();
    Ok(PeDistribution { probs: normalize_log_weights(&log_w), true_count: c })
}

/// One seeded draw from the distribution.
pub fn pe_sample(dist: &PeDistribution, seed: u64) -> usize {
    dist.sample(&mut rng_from_seed(seed))
}

/// Scales a subset count up to the population, `raw · N / n`.
pub fn scale_answer(raw_count: usize, population: usize, subset_size: usize) -> f64 {
    raw_count as f64 * population as f64 / subset_size as f64
}

/// Closed-form RMSE of the scaled release against `true_answer`.
pub fn exact_rmse(dist: &PeDistribution, population: usize, subset_size: usize, true_answer: f64) -> f64 {
    dist.probs
        .iter()
        .enumerate()
        .map(|(r, p)| {
            let err = true_answer - scale_answer(r, population, subset_size);
            p * err * err
        })
        .sum::<f64>()
        .sqrt()
}

/// RMSE over `runs` internal draws. The draws are never released.
pub fn monte_carlo_rmse(
    dist: &PeDistribution,
    population: usize,
    subset_size: usize,
    true_answer: f64,
    runs: usize,
    seed: u64,
) -> Result<f64> {
    if runs == 0 {
        return Err(Error::domain("Monte-Carlo RMSE needs at least one run"));
    }
    let mut rng = rng_from_seed(seed);
    let sum_sq: f64 = (0..runs)
        .map(|_| {
            let err = true_answer - scale_answer(dist.sample(&mut rng), population, subset_size);
            err * err
        })
        .sum();
    Ok((sum_sq / runs as f64).sqrt())
}

/// Inverse CDF of Laplace(0, b) at `u ∈ (0, 1)`.
pub fn laplace_from_uniform(scale_b: f64, u: f64) -> f64 {
    let centered = u - 0.5;
    -scale_b * centered.signum() * (1.0 - 2.0 * centered.abs()).ln()
}

pub fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, scale_b: f64) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return laplace_from_uniform(scale_b, u);
        }
    }
}

pub fn laplace_sample(scale_b: f64, seed: u64) -> Result<f64> {
    check_scale(scale_b)?;
    Ok(sample_laplace(&mut rng_from_seed(seed), scale_b))
}

pub(crate) fn check_scale(scale_b: f64) -> Result<()> {
    if !(scale_b > 0.0) || scale_b.is_nan() {
        return Err(Error::domain(format!("Laplace scale must be positive, got {scale_b}")));
    }
    Ok(())
}

/// Worst case observed by [`verify_pdp_ratio`].
#[derive(Debug, Clone, PartialEq)]
pub struct PdpReport {
    /// Largest `(Pr[D=r] / Pr[D'=r]) / exp(ε_i)` over everything checked.
    pub max_quotient: f64,
    /// `(owner position, output)` attaining the maximum.
    pub worst: Option<(usize, usize)>,
    pub pairs_checked: usize,
    pub passed: bool,
}

impl PdpReport {
    fn merge(&mut self, other: PdpReport) {
        if other.max_quotient > self.max_quotient {
            self.max_quotient = other.max_quotient;
            self.worst = other.worst;
        }
        self.pairs_checked += other.pairs_checked;
        self.passed &= other.passed;
    }
}

/// Largest subset the exhaustive verifier accepts.
pub const MAX_VERIFY_OWNERS: usize = 12;

/// Checks the personalized ratio bound for every owner's neighbour of `flags`
/// (that owner's bit flipped), in both directions, over every output with
/// non-zero probability under both inputs.
pub fn verify_pdp_ratio(flags: &[bool], spec: &PrivacySpec) -> Result<PdpReport> {
    if flags.len() != spec.len() {
        return Err(Error::domain("flags and privacy spec differ in length"));
    }
    if flags.len() > MAX_VERIFY_OWNERS {
        return Err(Error::domain(format!("exhaustive check limited to {MAX_VERIFY_OWNERS} owners")));
    }
    let eps = spec.eps();
    let base = pe_distribution(flags, &eps)?;
    let mut report = PdpReport { max_quotient: 0.0, worst: None, pairs_checked: 0, passed: true };
    for i in 0..flags.len() {
        let mut neighbour = flags.to_vec();
        neighbour[i] = !neighbour[i];
        let other = pe_distribution(&neighbour, &eps)?;
        let bound = eps[i].exp();
        for (r, (&p, &q)) in base.probs.iter().zip(&other.probs).enumerate() {
            if p == 0.0 || q == 0.0 {
                continue;
            }
            let quotient = (p / q).max(q / p) / bound;
            if quotient > report.max_quotient {
                report.max_quotient = quotient;
                report.worst = Some((i, r));
            }
            if quotient > 1.0 + 1e-9 {
                report.passed = false;
            }
            report.pairs_checked += 1;
        }
    }
    Ok(report)
}

/// Runs [`verify_pdp_ratio`] over every flag vector of length `spec.len()`.
pub fn verify_pdp_exhaustive(spec: &PrivacySpec) -> Result<PdpReport> {
    let n = spec.len();
    if n == 0 || n > MAX_VERIFY_OWNERS {
        return Err(Error::domain(format!("exhaustive check needs 1..={MAX_VERIFY_OWNERS} owners")));
    }
    let mut total = PdpReport { max_quotient: 0.0, worst: None, pairs_checked: 0, passed: true };
    for bits in 0u32..(1 << n) {
        let flags: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
        total.merge(verify_pdp_ratio(&flags, spec)?);
    }
    Ok(total)
}
