//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line and then
//! asserts it, so `cargo test --test acceptance -- --nocapture` doubles as a
//! report.

use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use toolcache_core::keying::{canonicalize, make_key};
use toolcache_core::model::{ParamValue, Params, PolicyConfig, SemanticFeatures, SystemFeatures, CacheEntry};
use toolcache_core::policy::{
    caca_group_reward, eviction_score, group_reward, select_arm, ucb_score, BanditPolicy, EvictionKind,
    GroupStats, PolicyKind, RewardKind,
};
use toolcache_core::sim::{
    compare_grouping, run_sweep, unique_cacheable_keys, SimulationReport, SweepSpec, DEFAULT_FRACTIONS,
};
use toolcache_core::store::CacheStore;
use toolcache_core::value::{caching_value, Feature, FeatureRange};
use toolcache_core::workload::{generate, DistributionKind, ToolCatalog, WorkloadConfig};
use toolcache_core::{CacheEngine, CacheKey, ToolCallRequest};

fn verdict(n: u8, name: &str, pass: bool, detail: impl std::fmt::Display) {
    println!("criterion {n:>2} {name:<28} {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

struct ZipfSweep {
    report: SimulationReport,
    elapsed: Duration,
}

fn zipf_sweep() -> &'static ZipfSweep {
    static SWEEP: OnceLock<ZipfSweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let start = Instant::now();
        let trace = generate(&ToolCatalog::default_catalog(), &WorkloadConfig::default()).unwrap();
        let report = run_sweep(&trace, &SweepSpec::default()).unwrap();
        ZipfSweep {
            report,
            elapsed: start.elapsed(),
        }
    })
}

/// Per fraction: (vaac, caca, lru) metric values.
fn triples(metric: impl Fn(&toolcache_core::sim::CellMetrics) -> f64) -> Vec<(f64, f64, f64)> {
    let r = &zipf_sweep().report;
    DEFAULT_FRACTIONS
        .iter()
        .map(|&f| {
            let m = |p| metric(r.cell(p, f).expect("sweep cell"));
            (m(PolicyKind::Vaac), m(PolicyKind::Caca), m(PolicyKind::Lru))
        })
        .collect()
}

#[test]
fn criterion_01_hit_ratio_dominance() {
    let sweep = zipf_sweep();
    let rows = triples(|c| c.hit_ratio);
    let vs_lru = rows.iter().filter(|(v, _, l)| v >= l).count();
    let vs_caca = rows.iter().filter(|(v, c, _)| v >= c).count();
    let best_gap = rows
        .iter()
        .map(|(v, c, l)| v - c.max(*l))
        .fold(f64::NEG_INFINITY, f64::max);
    let fast = sweep.elapsed < Duration::from_secs(10);
    let pass = vs_lru >= 4 && vs_caca >= 4 && best_gap >= 0.03 && fast;
    verdict(
        1,
        "hit ratio dominance",
        pass,
        format!(
            "(>=lru {vs_lru}/5, >=caca {vs_caca}/5, best gap {best_gap:+.4} need +0.03, {:.2?})",
            sweep.elapsed
        ),
    );
}

#[test]
fn criterion_02_latency_and_cost() {
    let lat = triples(|c| c.total_latency_ms);
    let cost = triples(|c| c.total_cost);
    let lat_both = lat.iter().filter(|(v, c, l)| v <= c && v <= l).count();
    let best_cut = lat.iter().map(|(v, _, l)| 1.0 - v / l).fold(f64::NEG_INFINITY, f64::max);
    let cost_both = cost.iter().filter(|(v, c, l)| v <= c && v <= l).count();
    let pass = lat_both >= 4 && best_cut >= 0.08 && cost_both >= 3;
    verdict(
        2,
        "latency and cost",
        pass,
        format!("(latency <= both {lat_both}/5, best cut vs lru {best_cut:.4} need 0.08, cost <= both {cost_both}/5)"),
    );
}

#[test]
fn criterion_03_bytes_trade_off() {
    let bytes = triples(|c| c.total_bytes as f64);
    let ge = bytes.iter().filter(|(v, _, l)| v >= l).count();
    verdict(3, "size trade-off", ge >= 3, format!("(bytes >= lru {ge}/5)"));
}

#[test]
fn criterion_04_user_grouping() {
    let cfg = WorkloadConfig {
        distribution: DistributionKind::Multiuser,
        n_users: 10,
        user_overlap: 0.3,
        ..WorkloadConfig::default()
    };
    let trace = generate(&ToolCatalog::default_catalog(), &cfg).unwrap();
    let rows = compare_grouping(&trace, &[0.10, 0.20, 0.30], &PolicyConfig::default()).unwrap();
    let better = rows
        .iter()
        .filter(|r| r.with_user_hit_ratio > r.without_user_hit_ratio)
        .count();
    let rel = rows[0].with_user_hit_ratio / rows[0].without_user_hit_ratio - 1.0;
    let detail = rows
        .iter()
        .map(|r| format!("{:.2}: {:.4} vs {:.4}", r.fraction, r.with_user_hit_ratio, r.without_user_hit_ratio))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        4,
        "user grouping benefit",
        better == 3 && rel >= 0.05,
        format!("({detail}; relative gain at 0.10 {rel:+.4} need +0.05)"),
    );
}

fn informational(seq: u64, tool: &str, id: i64, ttl: f64, gap: f64) -> ToolCallRequest {
    let mut params = Params::new();
    params.insert("id".into(), ParamValue::Int(id));
    let mut r = ToolCallRequest::new(seq, "u", tool, params)
        .with_measurements(100.0 + id as f64, 0.001, 512)
        .with_annotation(SemanticFeatures::informational(Some(id.to_string()), ttl));
    r.gap_seconds = gap;
    r
}

/// List-scan LRU: front is least recently used.
fn reference_lru(keys: &[usize], capacity: usize) -> Vec<bool> {
    let mut list: Vec<usize> = Vec::new();
    keys.iter()
        .map(|k| {
            if let Some(pos) = list.iter().position(|x| x == k) {
                list.remove(pos);
                list.push(*k);
                true
            } else {
                if list.len() == capacity {
                    list.remove(0);
                }
                list.push(*k);
                false
            }
        })
        .collect()
}

#[test]
fn criterion_05_lru_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for _ in 0..100 {
        let uniques = rng.random_range(1..=100usize);
        let n = rng.random_range(1..=1000usize);
        let capacity = rng.random_range(1..=uniques);
        let keys: Vec<usize> = (0..n).map(|_| rng.random_range(0..uniques)).collect();
        let cfg = PolicyConfig::default().with_capacity(capacity);
        let mut engine = CacheEngine::with_kind(PolicyKind::Lru, &cfg).unwrap();
        let got: Vec<bool> = keys
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let r = informational(i as u64 + 1, "lookup", k as i64, 1e9, 1.0);
                engine.process(&r).unwrap().hit
            })
            .collect();
        if got != reference_lru(&keys, capacity) {
            mismatches += 1;
        }
    }
    verdict(5, "lru oracle equivalence", mismatches == 0, format!("({mismatches}/100 traces differ)"));
}

#[test]
fn criterion_06_ttl_fuzz() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ttls = [0.0, 30.0, 61.0, 90.0, 300.0, 3600.0];
    let mut violations = 0;
    let mut hits = 0;

    // Through the full pipeline.
    for kind in PolicyKind::ALL {
        let cfg = PolicyConfig::default().with_capacity(16);
        let mut engine = CacheEngine::with_kind(kind, &cfg).unwrap();
        for seq in 1..=10_000u64 {
            let id = rng.random_range(0..40);
            let ttl = ttls[rng.random_range(0..ttls.len())];
            let gap = rng.random_range(0.0..120.0);
            let r = informational(seq, "fuzz", id, ttl, gap);
            let key = make_key(&r.tool_name, &r.params).unwrap();
            let expiry = engine.store().get(&key).map(|e| e.expiry_time);
            let now = engine.store().clock() + (gap * 1000.0).round() as u64;
            let out = engine.process(&r).unwrap();
            if out.hit {
                hits += 1;
                if !expiry.is_some_and(|x| now < x) {
                    violations += 1;
                }
            }
        }
    }

    // Directly against the store.
    let mut store = CacheStore::new(32);
    for _ in 0..10_000 {
        let key = CacheKey::from_canonical(format!("k:{{id={}}}", rng.random_range(0..64)));
        match rng.random_range(0..3) {
            0 => {
                if store.is_full() && !store.contains(&key) {
                    let victim = store.iter_by_recency().next().unwrap().key.clone();
                    store.remove(&victim);
                }
                let ttl = ttls[rng.random_range(0..ttls.len())];
                store.insert(entry(key, ttl));
            }
            1 => store.advance_clock(rng.random_range(0..200_000)),
            _ => {
                if let Some(e) = store.lookup(&key) {
                    if store.clock() >= e.expiry_time {
                        violations += 1;
                    }
                }
                let now = store.clock();
                store.purge_expired(now);
                if store.iter_by_recency().any(|e| e.expiry_time <= now) {
                    violations += 1;
                }
            }
        }
    }
    verdict(6, "ttl safety fuzz", violations == 0, format!("({violations} stale reads, {hits} engine hits checked)"));
}

fn entry(key: CacheKey, ttl: f64) -> CacheEntry {
    CacheEntry {
        key,
        payload: Vec::new(),
        semantic: SemanticFeatures::informational(None, ttl),
        system: SystemFeatures::default(),
        value_score: 0.0,
        hit_count: 0,
        insert_time: 0,
        last_access_time: 0,
        expiry_time: 0,
        recency_stamp: 0,
    }
}

fn random_value(rng: &mut ChaCha8Rng, depth: u32) -> ParamValue {
    let pick = if depth >= 3 { rng.random_range(0..5) } else { rng.random_range(0..7) };
    match pick {
        0 => ParamValue::Null,
        1 => ParamValue::Bool(rng.random()),
        2 => ParamValue::Int(rng.random_range(-1000..1000)),
        3 => ParamValue::Float(rng.random_range(-1e3..1e3)),
        4 => ParamValue::Str(random_word(rng)),
        5 => ParamValue::List((0..rng.random_range(0..4)).map(|_| random_value(rng, depth + 1)).collect()),
        _ => ParamValue::Map(random_map(rng, depth + 1)),
    }
}

fn random_word(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'c', 'x', 'y', 'z', '=', ',', '{', ']', ' ', 'é', '\\'];
    (0..rng.random_range(1..6))
        .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())])
        .collect()
}

fn random_map(rng: &mut ChaCha8Rng, depth: u32) -> Params {
    let mut m = Params::new();
    for _ in 0..rng.random_range(0..5) {
        m.insert(random_word(rng), random_value(rng, depth));
    }
    m
}

fn shuffled(rng: &mut ChaCha8Rng, m: &Params) -> Params {
    let mut items: Vec<(String, ParamValue)> = m.iter().map(|(k, v)| (k.clone(), shuffle_value(rng, v))).collect();
    items.shuffle(rng);
    items.into_iter().collect()
}

fn shuffle_value(rng: &mut ChaCha8Rng, v: &ParamValue) -> ParamValue {
    match v {
        ParamValue::Map(m) => ParamValue::Map(shuffled(rng, m)),
        ParamValue::List(items) => ParamValue::List(items.iter().map(|i| shuffle_value(rng, i)).collect()),
        other => other.clone(),
    }
}

#[test]
fn criterion_07_key_canonicalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut unstable = 0;
    let mut digests: HashMap<[u8; 32], String> = HashMap::new();
    let mut collisions = 0;
    for _ in 0..10_000 {
        let params = random_map(&mut rng, 0);
        let key = make_key("tool", &params).unwrap();
        let permuted = shuffled(&mut rng, &params);
        if make_key("tool", &permuted).unwrap() != key
            || canonicalize("tool", &permuted).unwrap() != key.debug_form()
        {
            unstable += 1;
        }
        let canonical = key.debug_form().to_string();
        match digests.get(key.digest()) {
            Some(seen) if *seen != canonical => collisions += 1,
            Some(_) => {}
            None => {
                digests.insert(*key.digest(), canonical);
            }
        }
    }
    let mut distinct: HashMap<[u8; 32], usize> = HashMap::new();
    for i in 0..10_000usize {
        let key = CacheKey::from_canonical(format!("tool:{{id={i}}}"));
        if distinct.insert(*key.digest(), i).is_some() {
            collisions += 1;
        }
    }
    verdict(
        7,
        "key canonicalization",
        unstable == 0 && collisions == 0,
        format!("({unstable} permutation mismatches, {collisions} collisions over {} random and 10000 sequential canonical forms)", digests.len()),
    );
}

#[test]
fn criterion_08_bandit_convergence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = [0.9, 0.3];
    let mut sums = [0.0f64; 2];
    let mut pulls = [0u64; 2];
    let mut late_a = 0;
    let mut late = 0;
    for t in 1..=1000u64 {
        let means: Vec<f64> = (0..2).map(|i| if pulls[i] == 0 { 0.0 } else { sums[i] / pulls[i] as f64 }).collect();
        let arm = select_arm(&means, &pulls, t, std::f64::consts::SQRT_2);
        let reward = if rng.random_bool(p[arm]) { 1.0 } else { 0.0 };
        sums[arm] += reward;
        pulls[arm] += 1;
        if t >= 500 {
            late += 1;
            late_a += (arm == 0) as u32;
        }
    }
    let share = late_a as f64 / late as f64;
    let elapsed = start.elapsed();
    verdict(
        8,
        "bandit convergence",
        share > 0.8 && elapsed < Duration::from_secs(1),
        format!("(arm A share {share:.4} over rounds 500-1000, {elapsed:.2?})"),
    );
}

#[test]
fn criterion_09_formulas() {
    let cfg = PolicyConfig::default();
    let close = |got: f64, want: f64| ((got - want) / want).abs() <= 1e-9;
    let mut failures = Vec::new();
    let mut check = |name: &str, got: f64, want: f64| {
        if !close(got, want) {
            failures.push(format!("{name}: {got} != {want}"));
        }
    };

    let mut range = FeatureRange::default();
    range.observe(100.0, 0.0, 1.0).unwrap();
    range.observe(500.0, 1.0, 2.0).unwrap();
    check("normalize", range.normalize(Feature::Latency, 300.0, 0.01).unwrap(), 0.5);

    check("value high", caching_value(&cfg, 300.0, 1.0, 0.5, 0.5, 3600.0), 0.999_998_771_157_529_3);
    check("value negative", caching_value(&cfg, 300.0, 0.01, 0.01, 1.0, 300.0), -0.063_575_888_234_288_47);

    let g = GroupStats {
        hit_ratio: 1.0,
        level: 1.0,
        avg_value: 1.0,
        admitted: 0.0,
    };
    check("reward", group_reward(&g, &cfg), 0.333_024_651_988_929_44);
    check("hit-only reward", caca_group_reward(&g, &cfg), 0.480_453_013_918_201_4);
    check("ucb", ucb_score(0.333_024_651_988_929_44, 1, 10, std::f64::consts::SQRT_2), 2.478_990_678_278_277);

    let mut e = entry(CacheKey::from_canonical("k:{}".into()), 3600.0);
    e.value_score = 0.5;
    e.hit_count = 1;
    check("eviction score", eviction_score(&e, &cfg), std::f64::consts::LN_2);
    e.value_score = -0.1;
    e.hit_count = 0;
    check("eviction score negative", eviction_score(&e, &cfg), -0.105_360_515_657_826_28);

    verdict(9, "formula values", failures.is_empty(), format!("({})", failures.join("; ")));
}

#[test]
fn criterion_10_determinism() {
    let catalog = ToolCatalog::default_catalog();
    let mut mismatched = Vec::new();
    for distribution in [DistributionKind::Zipf, DistributionKind::Hotspot, DistributionKind::Multiuser] {
        let cfg = WorkloadConfig {
            distribution,
            ..WorkloadConfig::default()
        };
        let run = |threads| {
            let trace = generate(&catalog, &cfg).unwrap();
            let spec = SweepSpec {
                threads,
                ..SweepSpec::default()
            };
            run_sweep(&trace, &spec).unwrap().to_json().unwrap()
        };
        let a = run(None);
        if a != run(None) || a != run(Some(1)) {
            mismatched.push(format!("{distribution:?}"));
        }
    }
    verdict(10, "deterministic reports", mismatched.is_empty(), format!("(differing: {mismatched:?})"));
}

#[test]
fn criterion_11_degeneracy() {
    let catalog = ToolCatalog::default_catalog();
    let mut differing = 0;
    let mut decisions = 0;
    for (distribution, fraction) in [
        (DistributionKind::Zipf, 0.1),
        (DistributionKind::Zipf, 0.35),
        (DistributionKind::Hotspot, 0.2),
        (DistributionKind::Multiuser, 0.1),
    ] {
        let trace = generate(
            &catalog,
            &WorkloadConfig {
                distribution,
                ..WorkloadConfig::default()
            },
        )
        .unwrap();
        let unique = unique_cacheable_keys(&trace).unwrap();
        let cfg = PolicyConfig::default().with_capacity(toolcache_core::sim::capacity_for(fraction, unique));
        let reduced = BanditPolicy::vaac(&cfg)
            .with_reward(RewardKind::HitOnly)
            .with_eviction(EvictionKind::Lru);
        let mut a = CacheEngine::new(Box::new(reduced), &cfg).unwrap();
        let mut b = CacheEngine::with_kind(PolicyKind::Caca, &cfg).unwrap();
        for r in &trace {
            let x = a.process(r).unwrap();
            let y = b.process(r).unwrap();
            decisions += x.decision.is_some() as u32;
            // Debug output of f64 round-trips exactly, so this compares bits.
            if format!("{x:?}") != format!("{y:?}") {
                differing += 1;
            }
        }
    }
    verdict(
        11,
        "degeneracy to hit-only bandit",
        differing == 0 && decisions > 0,
        format!("({differing} differing outcomes, {decisions} bandit decisions compared)"),
    );
}
