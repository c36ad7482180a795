//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;

use pdmarket::allocation::{allocate, allocate_overbudget, full_price, Branch};
use pdmarket::experiment::{median_by_price, run_comparison, SweepPlan, SweepRow};
use pdmarket::ingest::{synth_dataset, AttributeModel, MixSpec};
use pdmarket::mechanism::{laplace_from_uniform, pe_distribution, sample_laplace, verify_pdp_ratio, PrivacySpec};
use pdmarket::sampling::{draw_subsets, representative_size, SamplingConfig, Subset};
use pdmarket::seed::rng_from_seed;
use pdmarket::trading::{execute_trade_balanced, Mechanism, TradeConfig, TradeLedger, TradeRequest};
use pdmarket::{
    epsilon_of, evaluate_query, price_of, AttrValue, CountQuery, DataOwner, Dataset, ErrorKind, PaymentScheme, Schema,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const GRID: [f64; 5] = [5.0, 50.0, 100.0, 500.0, 1000.0];
const SWEEP_REPS: usize = 20;
const POPULATION: usize = 243_000;
const LEVEL_EPS: [f64; 4] = [0.1, 0.3, 0.7, 0.9];

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn population() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| synth_dataset(POPULATION, &MixSpec::uniform(), &AttributeModel::default(), 2024).unwrap())
}

fn car_query() -> CountQuery {
    CountQuery::parse("commute = car").unwrap()
}

fn sweep() -> &'static Result<Vec<SweepRow>, String> {
    static ROWS: OnceLock<Result<Vec<SweepRow>, String>> = OnceLock::new();
    ROWS.get_or_init(|| {
        let plan = SweepPlan {
            prices: GRID.to_vec(),
            reps: SWEEP_REPS,
            mechanisms: vec![Mechanism::Balanced, Mechanism::Baseline],
            config: TradeConfig { seed: 7, ..TradeConfig::default() },
        };
        run_comparison(population(), &car_query(), &plan).map_err(|e| e.to_string())
    })
}

fn sweep_rows() -> Result<&'static [SweepRow], String> {
    sweep().as_deref().map_err(Clone::clone)
}

fn fmt_series(series: &[(f64, f64)]) -> String {
    series.iter().map(|(p, v)| format!("${p}:{v:.4}")).collect::<Vec<_>>().join(" ")
}

fn sample_size() -> Outcome {
    let cfg = SamplingConfig::default();
    let start = Instant::now();
    let size = representative_size(POPULATION, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(size == 384, || format!("got {size}"))?;
    ensure(elapsed < Duration::from_millis(1), || format!("took {elapsed:?}"))?;
    Ok(format!("|RS| = {size} in {elapsed:?}"))
}

fn pdp_ratio_suite() -> Outcome {
    let mut rng = rng_from_seed(2);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for instance in 0..200 {
        let n = rng.random_range(1..=5);
        let eps: Vec<f64> = (0..n).map(|_| *LEVEL_EPS.choose(&mut rng).unwrap()).collect();
        let flags: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let spec = PrivacySpec::from_eps(&eps).map_err(|e| e.to_string())?;
        let report = verify_pdp_ratio(&flags, &spec).map_err(|e| e.to_string())?;
        ensure(report.passed, || {
            format!("instance {instance} ({flags:?}, {eps:?}): quotient {}", report.max_quotient)
        })?;
        worst = worst.max(report.max_quotient);
        pairs += report.pairs_checked;
    }
    Ok(format!("200 instances, {pairs} neighbour/output pairs, worst ratio/exp(eps) = {worst:.6}"))
}

fn payment_round_trip() -> Outcome {
    let mut worst: f64 = 0.0;
    let sat = 8.0 / 500f64.sqrt();
    // TypeA pays without bound; cover the range any dataset can ask for.
    let a_grid = (1..=1000).map(|i| i as f64 / 1000.0);
    // TypeB: linear grid plus points approaching the saturation value.
    let b_grid = (1..=900)
        .map(|i| sat * i as f64 / 901.0)
        .chain((1..=100).map(|k| sat * (1.0 - 10f64.powf(-(k as f64) * 0.12))));
    for (scheme, grid) in
        [(PaymentScheme::TypeA, a_grid.collect::<Vec<_>>()), (PaymentScheme::TypeB, b_grid.collect::<Vec<_>>())]
    {
        ensure(grid.len() == 1000, || format!("{scheme} grid has {} points", grid.len()))?;
        for p in grid {
            let back =
                price_of(scheme, epsilon_of(scheme, p).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            let err = (back - p).abs();
            ensure(err < 1e-9, || format!("{scheme} at p = {p}: error {err:e}"))?;
            worst = worst.max(err);
        }
    }
    Ok(format!("2 x 1000 points, worst |error| = {worst:e}"))
}

fn budget_identity() -> Outcome {
    let failures: Vec<String> = (0..1000u64)
        .into_par_iter()
        .filter_map(|t| {
            let mut rng = rng_from_seed(10_000 + t);
            let n = rng.random_range(10..=5000);
            let raw: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>() + 1e-3);
            let total: f64 = raw.iter().sum();
            let mix = MixSpec::new(raw.map(|r| r / total)).unwrap_or_default();
            let ds = synth_dataset(n, &mix, &AttributeModel::default(), t).ok()?;
            let chi = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..2.0) };
            let budget = chi + 10f64.powf(rng.random_range(-2.0..3.5));
            let cfg = TradeConfig { chi, seed: t, ..TradeConfig::default() };
            let request = TradeRequest { buyer: "fuzz".into(), query: car_query(), budget };
            let receipt = match execute_trade_balanced(&ds, &request, &cfg, &mut TradeLedger::new()) {
                Ok(r) => r,
                Err(e) => return Some(format!("trade {t}: {e}")),
            };
            if receipt.budget_gap().abs() > 1e-6 {
                return Some(format!("trade {t}: gap {}", receipt.budget_gap()));
            }
            for c in &receipt.compensations {
                let owner = &ds.owners()[c.owner as usize];
                if owner.id != c.owner || c.eps_bought > owner.eps_max {
                    return Some(format!("trade {t}: owner {} bought {} > {}", c.owner, c.eps_bought, owner.eps_max));
                }
            }
            None
        })
        .collect();
    ensure(failures.is_empty(), || format!("{} failures, first: {}", failures.len(), failures[0]))?;
    Ok("1000 trades balanced within 1e-6, no owner oversold".into())
}

fn owners_dataset(owners: &[(PaymentScheme, f64)]) -> Dataset {
    let owners = owners
        .iter()
        .enumerate()
        .map(|(i, &(s, e))| DataOwner::new(i as u64, Vec::<AttrValue>::new(), e, s, 1.0).unwrap())
        .collect();
    Dataset::new(Schema::default(), owners, "acceptance").unwrap()
}

fn waterfilling() -> Outcome {
    let mut rng = rng_from_seed(5);
    let schemes = [PaymentScheme::TypeA, PaymentScheme::TypeB];
    let mut worst_sum: f64 = 0.0;
    let mut worst_level: f64 = 0.0;
    for trial in 0..1000 {
        let m = rng.random_range(1..=60);
        let owners: Vec<_> =
            (0..m).map(|_| (*schemes.choose(&mut rng).unwrap(), *LEVEL_EPS.choose(&mut rng).unwrap())).collect();
        let ds = owners_dataset(&owners);
        let subset = Subset::new((0..m).collect());
        let full = full_price(&subset, &ds);
        let budget = full * rng.random_range(0.001..0.999);
        let alloc = allocate(&subset, &ds, budget, trial).map_err(|e| e.to_string())?;
        ensure(alloc.branch == Branch::OverBudget, || format!("trial {trial}: wrong branch"))?;
        let paid: f64 = alloc.allocations.iter().map(|a| a.payment).sum();
        worst_sum = worst_sum.max((paid - budget).abs());
        ensure((paid - budget).abs() < 1e-6, || format!("trial {trial}: paid {paid} of {budget}"))?;
        let partial: Vec<f64> = alloc
            .allocations
            .iter()
            .filter(|a| a.eps_bought < ds.owners()[a.index].eps_max)
            .map(|a| a.payment)
            .collect();
        if let (Some(lo), Some(hi)) =
            (partial.iter().copied().reduce(f64::min), partial.iter().copied().reduce(f64::max))
        {
            worst_level = worst_level.max(hi - lo);
            ensure(hi - lo < 1e-9, || format!("trial {trial}: partial payments spread {}", hi - lo))?;
            for a in &alloc.allocations {
                ensure(a.payment <= hi + 1e-9, || format!("trial {trial}: full owner paid above the level"))?;
                ensure(a.eps_bought <= ds.owners()[a.index].eps_max, || format!("trial {trial}: oversold"))?;
            }
        }
    }

    let type_b = |p: f64| epsilon_of(PaymentScheme::TypeB, p).unwrap();
    let ds = owners_dataset(&[(PaymentScheme::TypeB, 0.9), (PaymentScheme::TypeB, 0.9)]);
    let a = allocate_overbudget(&Subset::new(vec![0, 1]), &ds, 0.2).map_err(|e| e.to_string())?;
    for o in &a.allocations {
        ensure((o.payment - 0.1).abs() < 1e-12 && (o.eps_bought - 0.43177).abs() < 1e-4, || format!("{o:?}"))?;
    }
    let ds = owners_dataset(&[(PaymentScheme::TypeA, 0.1), (PaymentScheme::TypeB, 0.9)]);
    let a = allocate_overbudget(&Subset::new(vec![0, 1]), &ds, 0.2).map_err(|e| e.to_string())?;
    let full_a = price_of(PaymentScheme::TypeA, 0.1).unwrap();
    let (x, y) = (&a.allocations[0], &a.allocations[1]);
    ensure(x.eps_bought == 0.1 && (x.payment - full_a).abs() < 1e-12, || format!("TypeA owner {x:?}"))?;
    ensure((y.payment - (0.2 - full_a)).abs() < 1e-12 && (y.eps_bought - 0.54148).abs() < 1e-3, || format!("{y:?}"))?;
    ensure((x.payment + y.payment - 0.2).abs() < 1e-12, || "two-owner total".into())?;
    let ds = owners_dataset(&[(PaymentScheme::TypeB, 0.9)]);
    let a = allocate_overbudget(&Subset::new(vec![0]), &ds, 0.05).map_err(|e| e.to_string())?;
    ensure(a.allocations[0].payment == 0.05 && a.allocations[0].eps_bought == type_b(0.05), || "single owner".into())?;

    Ok(format!(
        "1000 waterfills, worst |sum - W_ab| = {worst_sum:e}, worst level spread = {worst_level:e}; hand cases match"
    ))
}

/// Output distribution by enumerating every set of records to change.
fn brute_force_pe(flags: &[bool], eps: &[f64]) -> Vec<f64> {
    let n = flags.len();
    let truth = flags.iter().filter(|&&f| f).count();
    let mut best = vec![f64::INFINITY; n + 1];
    for set in 0u32..(1 << n) {
        let mut count = truth as i64;
        let mut cost = 0.0;
        for i in (0..n).filter(|i| set >> i & 1 == 1) {
            count += if flags[i] { -1 } else { 1 };
            cost += eps[i];
        }
        let r = count as usize;
        best[r] = best[r].min(cost);
    }
    let weights: Vec<f64> = best.iter().map(|c| (-c / 2.0).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

fn pe_correctness() -> Outcome {
    let flags = [true, true, false];
    let eps = [0.5, 0.2, 0.3];
    let dist = pe_distribution(&flags, &eps).map_err(|e| e.to_string())?;
    let oracle = brute_force_pe(&flags, &eps);
    let expected = [0.20307, 0.26074, 0.28816, 0.24803];
    for r in 0..4 {
        let p = dist.probs()[r];
        ensure((p - expected[r]).abs() < 1e-5 && (p - oracle[r]).abs() < 1e-12, || format!("r = {r}: {p}"))?;
    }
    let mut rng = rng_from_seed(6);
    let mut worst_norm: f64 = 0.0;
    for instance in 0..1000 {
        let n = rng.random_range(1..=12);
        let flags: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let eps: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let dist = pe_distribution(&flags, &eps).map_err(|e| e.to_string())?;
        let norm = (dist.probs().iter().sum::<f64>() - 1.0).abs();
        worst_norm = worst_norm.max(norm);
        ensure(norm < 1e-12, || format!("instance {instance}: normalization off by {norm:e}"))?;
        let mode = (0..=n).max_by(|&a, &b| dist.probs()[a].total_cmp(&dist.probs()[b])).unwrap();
        ensure(mode == dist.true_count(), || format!("instance {instance}: mode {mode} != truth"))?;
        let oracle = brute_force_pe(&flags, &eps);
        for (p, q) in dist.probs().iter().zip(&oracle) {
            ensure((p - q).abs() < 1e-12, || format!("instance {instance}: {p} vs oracle {q}"))?;
        }
    }
    Ok(format!("worked example matches; 1000 instances agree with the oracle, truth is the mode, worst normalization {worst_norm:e}"))
}

fn rmse_trend() -> Outcome {
    let start = Instant::now();
    let rows = sweep_rows()?;
    let elapsed = start.elapsed();
    let m = median_by_price(rows, Mechanism::Balanced, |r| r.rmse);
    let v: Vec<f64> = m.iter().map(|x| x.1).collect();
    ensure(v.windows(2).all(|w| w[1] < w[0]), || format!("not strictly decreasing: {}", fmt_series(&m)))?;
    let early = v[0] - v[1];
    let late = v[1] - v[4];
    ensure(early > late, || format!("$5->$50 drop {early:.1} <= $50->$1000 drop {late:.1}"))?;
    ensure(elapsed < Duration::from_secs(600), || format!("sweep took {elapsed:?}"))?;
    Ok(format!("median RMSE {} (sweep {elapsed:.1?})", fmt_series(&m)))
}

fn eps_and_payment_trend() -> Outcome {
    let rows = sweep_rows()?;
    let mut notes = Vec::new();
    let mut problems = Vec::new();
    for (label, series) in [
        ("eps_avg", median_by_price(rows, Mechanism::Balanced, |r| r.eps_avg)),
        ("w_avg", median_by_price(rows, Mechanism::Balanced, |r| r.w_avg)),
    ] {
        let v: Vec<f64> = series.iter().map(|x| x.1).collect();
        if let Some(i) = (0..3).find(|&i| v[i + 1] < v[i]) {
            problems.push(format!("{label} falls from ${} to ${}", GRID[i], GRID[i + 1]));
        }
        let rel = (v[4] - v[3]).abs() / v[3];
        if rel > 0.10 {
            problems.push(format!("{label} at $1000 is {:.1}% away from $500", rel * 100.0));
        }
        notes.push(format!("{label} {}", fmt_series(&series)));
    }
    let detail = notes.join("; ");
    ensure(problems.is_empty(), || format!("{}; medians: {detail}", problems.join(", ")))?;
    Ok(detail)
}

fn beats_baseline() -> Outcome {
    let rows = sweep_rows()?;
    let rmse = |m: Mechanism, p: f64, rep: usize| {
        rows.iter().find(|r| r.mechanism == m && r.price == p && r.rep == rep).map(|r| r.rmse).unwrap()
    };
    let wins = (0..SWEEP_REPS)
        .filter(|&rep| GRID.iter().all(|&p| rmse(Mechanism::Balanced, p, rep) < rmse(Mechanism::Baseline, p, rep)))
        .count();
    ensure(wins * 10 >= SWEEP_REPS * 9, || format!("balanced wins everywhere in only {wins}/{SWEEP_REPS} runs"))?;
    let mut worst_ratio: f64 = 0.0;
    for rep in 0..SWEEP_REPS {
        let ratio = rmse(Mechanism::Balanced, 5.0, rep) / rmse(Mechanism::Baseline, 5.0, rep);
        worst_ratio = worst_ratio.max(ratio);
    }
    ensure(worst_ratio <= 0.1, || format!("at $5 balanced/baseline reaches {worst_ratio:e}"))?;
    let base5 = median_by_price(rows, Mechanism::Baseline, |r| r.rmse)[0].1;
    Ok(format!("balanced wins at every price in {wins}/{SWEEP_REPS} runs; at $5 worst ratio {worst_ratio:.2e} (baseline RMSE {base5:.3e})"))
}

fn laplace_sampler() -> Outcome {
    let mut rng = rng_from_seed(10);
    let n = 1_000_000;
    let draws: Vec<f64> = (0..n).map(|_| sample_laplace(&mut rng, 10.0)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    ensure((var - 200.0).abs() <= 10.0, || format!("variance {var}"))?;
    let mid = laplace_from_uniform(10.0, 0.5);
    ensure(mid == 0.0, || format!("median draw {mid}"))?;
    Ok(format!("variance {var:.2} over 10^6 draws; draw at u = 0.5 is {mid}"))
}

fn arbitrage_guard() -> Outcome {
    let ds = synth_dataset(3000, &MixSpec::uniform(), &AttributeModel::default(), 11).map_err(|e| e.to_string())?;
    let cfg = TradeConfig::default();
    let mut ledger = TradeLedger::new();
    let trade = |ledger: &mut TradeLedger, buyer: &str, q: &str| {
        let request = TradeRequest { buyer: buyer.into(), query: CountQuery::parse(q).unwrap(), budget: 25.0 };
        execute_trade_balanced(&ds, &request, &cfg, ledger)
    };
    let q = "commute = car && commute != walk";
    let permuted = "commute != walk && commute = car";
    trade(&mut ledger, "alice", q).map_err(|e| format!("first trade: {e}"))?;
    for (buyer, query) in [("alice", q), ("alice", permuted)] {
        match trade(&mut ledger, buyer, query) {
            Err(e) if e.kind() == ErrorKind::Arbitrage => {}
            other => return Err(format!("{buyer} / {query:?}: expected arbitrage rejection, got {other:?}")),
        }
    }
    ensure(CountQuery::parse(q).unwrap().key() == CountQuery::parse(permuted).unwrap().key(), || "keys differ".into())?;
    trade(&mut ledger, "bob", q).map_err(|e| format!("other buyer: {e}"))?;
    trade(&mut ledger, "alice", "commute = walk").map_err(|e| format!("other query: {e}"))?;
    Ok(format!(
        "repeat and permuted repeat rejected; other buyer and other query accepted ({} purchases)",
        ledger.len()
    ))
}

fn unbiased_scaling() -> Outcome {
    let ds = population();
    let query = car_query();
    let truth = evaluate_query(&query, ds).map_err(|e| e.to_string())?;
    let bound = query.bind(ds).map_err(|e| e.to_string())?;
    let subsets = draw_subsets(ds, 384, 10_000, 12).map_err(|e| e.to_string())?;
    let scale = ds.len() as f64 / 384.0;
    let mean =
        subsets.iter().map(|s| s.members.iter().filter(|&&i| bound.flag(ds, i)).count() as f64 * scale).sum::<f64>()
            / subsets.len() as f64;
    let rel = (mean - truth).abs() / truth;
    ensure(rel < 0.02, || format!("mean {mean} vs Q(x) = {truth}"))?;
    Ok(format!("mean scaled count {mean:.1} vs Q(x) = {truth} ({:.3}% off)", rel * 100.0))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("C1 representative sample size", sample_size),
        ("C2 personalized DP ratio suite", pdp_ratio_suite),
        ("C3 payment scheme round trip", payment_round_trip),
        ("C4 budget identity fuzz", budget_identity),
        ("C5 waterfilling fixed point", waterfilling),
        ("C6 PE mechanism correctness", pe_correctness),
        ("C7 RMSE falls with price", rmse_trend),
        ("C8 eps and payment rise with price", eps_and_payment_trend),
        ("C9 balanced beats baseline", beats_baseline),
        ("C10 Laplace sampler", laplace_sampler),
        ("C11 arbitrage guard", arbitrage_guard),
        ("C12 unbiased scaling", unbiased_scaling),
    ];
    let limits: [Option<Duration>; 12] = [
        None,
        Some(Duration::from_secs(10)),
        Some(Duration::from_secs(1)),
        Some(Duration::from_secs(120)),
        None,
        None,
        None,
        None,
        None,
        None,
        None,
        None,
    ];
    let mut failed = 0;
    for ((name, run), limit) in criteria.into_iter().zip(limits) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(l)) if elapsed > l => Err(format!("took {elapsed:.2?}, limit {l:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail} ({elapsed:.2?})"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail} ({elapsed:.2?})");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
