use std::collections::HashSet;

use wincuckoo::workload::{
    achievable_load, bench_throughput, fpr_experiment, gen_keys, measure_fpr, summarize_loads, sweep_time_memory,
    walk_histogram_experiment, BenchMode, Partition, TimeMemorySweep,
};
use wincuckoo::{FilterConfig, ShardedFilter, Variant};

#[test]
fn partitions_are_disjoint_and_nearly_distinct() {
    let ins = gen_keys(17, 1_000_000, Partition::Insert);
    let qry = gen_keys(17, 1_000_000, Partition::Query);
    let set: HashSet<u64> = ins.iter().copied().collect();
    assert!(qry.iter().all(|x| !set.contains(x)));
    // expected duplicates among 1e6 draws of 63 bits is about 5e-8
    assert_eq!(set.len(), ins.len());
}

/// FPR relative to 2^-k.
fn fpr_ratio(variant: Variant, l: usize, k: u32) -> f64 {
    let cfg = FilterConfig::new(variant, l, k, 200_000).with_seed(3);
    fpr_experiment(&cfg, 2_000_000).unwrap().empirical_fpr.unwrap() * (k as f64).exp2()
}

#[test]
fn small_k_windowed_fpr_is_elevated() {
    // windows keep only k fingerprint bits, so losing the zero value costs them most
    let w3 = fpr_ratio(Variant::OffsetWindowed, 2, 3);
    let w10 = fpr_ratio(Variant::OffsetWindowed, 2, 10);
    let b3 = fpr_ratio(Variant::OffsetBucketed, 2, 3);
    assert!(w3 > w10 + 0.05, "{w3} vs {w10}");
    assert!(w3 > b3 + 0.05, "{w3} vs {b3}");
}

#[test]
fn bucketed_pairs_stay_below_their_threshold() {
    for seed in 0..3 {
        let b = achievable_load(Variant::OffsetBucketed, 2, 10, 200_000, 10_000, seed, seed).unwrap();
        let w = achievable_load(Variant::OffsetWindowed, 2, 10, 200_000, 10_000, seed, seed).unwrap();
        assert!(b.achieved_load < 0.91, "{}", b.achieved_load);
        assert!(w.achieved_load > b.achieved_load);
    }
}

#[test]
fn load_grows_with_walk_length() {
    let mut recs = Vec::new();
    for mw in [1, 10, 100, 10_000] {
        for seed in 0..5 {
            recs.push(achievable_load(Variant::OffsetWindowed, 4, 10, 50_000, mw, seed, seed).unwrap());
        }
    }
    let means: Vec<f64> = summarize_loads(&recs).iter().map(|s| s.mean).collect();
    assert_eq!(means.len(), 4);
    assert!(means.windows(2).all(|w| w[1] >= w[0]), "{means:?}");
    assert!(means[0] < means[3] - 0.3);
}

#[test]
fn walks_are_short_and_shorter_for_wide_groups() {
    for variant in [Variant::OffsetBucketed, Variant::OffsetWindowed] {
        let cfg = |l| FilterConfig::new(variant, l, 10, 300_000).with_seed(8);
        let (two, bins) = walk_histogram_experiment(&cfg(2)).unwrap();
        let (four, _) = walk_histogram_experiment(&cfg(4)).unwrap();
        assert!(two.zero_eviction_fraction > 0.75);
        assert!(two.walk_max < 10_000 && four.walk_max < 10_000);
        assert!(four.walk_p99 < two.walk_p99, "{variant}: {} vs {}", four.walk_p99, two.walk_p99);
        assert_eq!(bins.iter().map(|b| b.count).sum::<u64>() as usize, two.n - dupes(&cfg(2)));
        let zero = bins.iter().find(|b| b.evictions == 0).unwrap().count;
        assert!(bins.iter().all(|b| b.count <= zero));
    }
}

fn dupes(cfg: &FilterConfig) -> usize {
    let keys = gen_keys(cfg.seed, cfg.capacity, Partition::Insert);
    ShardedFilter::build_sequential(cfg, keys).unwrap().stats.duplicates as usize
}

#[test]
fn time_memory_sweep_properties() {
    let mut rows = Vec::new();
    for variant in [Variant::OffsetBucketed, Variant::OffsetWindowed] {
        for l in [2, 4] {
            let sweep = TimeMemorySweep {
                variant,
                l,
                k: 10,
                n: 100_000,
                loads: vec![0.5, 0.7, 0.85],
                seed: 1,
                max_walk: 10_000,
            };
            sweep_time_memory(&sweep, &mut rows).unwrap();
        }
    }
    let find = |v: Variant, l: usize, i: usize| rows.iter().filter(|r| r.variant == v && r.l == l).nth(i).unwrap();
    for l in [2, 4] {
        for i in 0..3 {
            let b = find(Variant::OffsetBucketed, l, i);
            let w = find(Variant::OffsetWindowed, l, i);
            assert_eq!(b.memory_bytes, w.memory_bytes);
            assert_eq!(b.s, w.s);
            assert_eq!(b.failures + w.failures, 0);
        }
    }
    for i in 0..3 {
        assert_eq!(find(Variant::OffsetWindowed, 2, i).q + 1, find(Variant::OffsetWindowed, 4, i).q);
    }
    assert!(rows.iter().all(|r| r.memory_bytes > 0 && r.wall_time_s >= 0.0));
}

#[test]
fn routing_is_uniform() {
    let cfg = FilterConfig::new(Variant::OffsetWindowed, 2, 10, 1_000_000).with_shards(7);
    let f = ShardedFilter::new(&cfg).unwrap();
    let n = 1_000_000;
    let mut counts = [0usize; 7];
    for x in gen_keys(5, n, Partition::Insert) {
        counts[f.route(x)] += 1;
    }
    let p = 1.0 / 7.0;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() < 5.0 * sigma, "{counts:?}");
    }
}

#[test]
fn parallel_queries_match_sequential() {
    let cfg = FilterConfig::new(Variant::OffsetBucketed, 4, 10, 100_000).with_shards(3).with_seed(2);
    let keys = gen_keys(2, 100_000, Partition::Insert);
    let f = ShardedFilter::build_sequential(&cfg, keys.iter().copied()).unwrap().filter;
    let mut probe = keys.clone();
    probe.extend(gen_keys(2, 100_000, Partition::Query));
    let one = f.query_parallel(&probe, 1);
    let eight = f.query_parallel(&probe, 8);
    assert_eq!(one, eight);
    assert_eq!(one, probe.iter().map(|&x| f.contains(x)).collect::<Vec<_>>());
    assert!(one[..100_000].iter().all(|&b| b));
    assert_eq!(f.count_parallel(&probe, 4), one.iter().filter(|&&b| b).count());
    assert!(measure_fpr(&f, 100_000, 2) < 2.0 / 1024.0);
}

#[test]
fn lookups_outpace_inserts() {
    // report-only in spirit; the margin here is wide enough to be stable
    let cfg = FilterConfig::new(Variant::OffsetWindowed, 2, 10, 300_000);
    let ins = bench_throughput(&cfg, BenchMode::Insert, 1, 3).unwrap();
    let hit = bench_throughput(&cfg, BenchMode::LookupHit, 1, 3).unwrap();
    let miss = bench_throughput(&cfg, BenchMode::LookupMiss, 1, 3).unwrap();
    let insert = ins.insert_throughput.unwrap();
    let (hit, miss) = (hit.lookup_throughput.unwrap(), miss.lookup_throughput.unwrap());
    eprintln!("insert {insert:e} hit {hit:e} miss {miss:e}");
    assert!(hit > insert && miss > insert);
}
