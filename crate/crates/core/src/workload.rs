//! Key generation, measurements and experiment drivers.
//!
//! Experiments produce [`ExperimentRecord`] rows. Grids hand each row to a
//! [`RecordSink`] as soon as it is complete, so an interrupted run keeps the
//! rows it already finished.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::concurrent::{ParallelOptions, ShardedFilter};
use crate::config::FilterConfig;
use crate::error::ConfigError;
use crate::filter::{BuildStats, Insertion};
use crate::hashing::derive_seed;
use crate::layout::{size_for_load, Geometry, Layout, Variant};

/// Version written into the first line of every record CSV.
pub const SCHEMA_VERSION: u32 = 1;

const KEY_ROLE: u64 = 0x4b45_5953;
const QUERY_TAG: u64 = 1 << 63;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Which of the two disjoint key sets a stream draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Insert,
    Query,
}

impl Partition {
    fn tag(self) -> u64 {
        match self {
            Partition::Insert => 0,
            Partition::Query => QUERY_TAG,
        }
    }
}

/// Unbounded seeded stream of 64-bit keys. The top bit identifies the
/// partition, so insert and query streams never share a key.
#[derive(Clone, Debug)]
pub struct KeyStream {
    rng: Xoshiro256PlusPlus,
    tag: u64,
}

impl KeyStream {
    pub fn new(seed: u64, partition: Partition) -> Self {
        let role = KEY_ROLE + (partition == Partition::Query) as u64;
        KeyStream {
            rng: Xoshiro256PlusPlus::seed_from_u64(derive_seed(seed, role)),
            tag: partition.tag(),
        }
    }
}

impl Iterator for KeyStream {
    type Item = u64;

    #[inline]
    fn next(&mut self) -> Option<u64> {
        Some((self.rng.next_u64() & !QUERY_TAG) | self.tag)
    }
}

/// First `n` keys of the partition's stream for `seed`.
pub fn gen_keys(seed: u64, n: usize, partition: Partition) -> Vec<u64> {
    KeyStream::new(seed, partition).take(n).collect()
}

/// Fraction of `m` fresh query-partition keys that the filter reports present.
pub fn measure_fpr(filter: &ShardedFilter, m: usize, seed: u64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let hits = KeyStream::new(seed, Partition::Query)
        .take(m)
        .filter(|&x| filter.contains(x))
        .count();
    hits as f64 / m as f64
}

fn scientific<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_str(&format!("{x:e}")),
        None => s.serialize_none(),
    }
}

fn millis(seconds: f64) -> f64 {
    (seconds * 1000.0).round() / 1000.0
}

/// One row of experiment output. Fields that an experiment does not measure
/// are left empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub variant: Variant,
    pub l: usize,
    pub k: u32,
    pub q: u32,
    /// Keys offered to the filter.
    pub n: usize,
    /// Keys stored in the table when the run ended.
    pub n_inserted: usize,
    /// Total slots over all shards.
    pub s: usize,
    pub load_fraction: f64,
    pub max_walk: u32,
    pub shards: usize,
    pub threads: usize,
    pub seed: u64,
    pub key_seed: u64,
    pub hash_seed: u64,
    pub mode: Option<String>,
    pub seed_variation: Option<String>,
    pub achieved_load: f64,
    pub empirical_fpr: Option<f64>,
    pub overhead_c: f64,
    #[serde(serialize_with = "scientific")]
    pub insert_throughput: Option<f64>,
    #[serde(serialize_with = "scientific")]
    pub lookup_throughput: Option<f64>,
    pub walk_p50: u32,
    pub walk_p99: u32,
    pub walk_max: u32,
    pub zero_eviction_fraction: f64,
    pub wall_time_s: f64,
    pub memory_bytes: usize,
    pub failures: u64,
}

impl ExperimentRecord {
    fn new(experiment: &str, g: &Geometry, seed: u64, max_walk: u32) -> Self {
        ExperimentRecord {
            experiment: experiment.to_string(),
            variant: g.variant,
            l: g.l,
            k: g.k,
            q: g.q,
            n: 0,
            n_inserted: 0,
            s: g.total_slots(),
            load_fraction: 0.0,
            max_walk,
            shards: g.shards,
            threads: 1,
            seed,
            key_seed: seed,
            hash_seed: seed,
            mode: None,
            seed_variation: None,
            achieved_load: 0.0,
            empirical_fpr: None,
            overhead_c: 0.0,
            insert_throughput: None,
            lookup_throughput: None,
            walk_p50: 0,
            walk_p99: 0,
            walk_max: 0,
            zero_eviction_fraction: 0.0,
            wall_time_s: 0.0,
            memory_bytes: 0,
            failures: 0,
        }
    }

    /// Fills the fields that describe a finished filter.
    fn describe(&mut self, filter: &ShardedFilter, stats: &BuildStats, seconds: f64) {
        let walks = stats.walk_summary();
        self.n_inserted = filter.occupied_slots();
        self.achieved_load = filter.load_factor();
        self.overhead_c = filter.geometry().overhead(self.n_inserted);
        self.walk_p50 = walks.p50;
        self.walk_p99 = walks.p99;
        self.walk_max = walks.max;
        self.zero_eviction_fraction = walks.zero_fraction;
        self.memory_bytes = filter.memory_bytes();
        self.failures = stats.failures;
        self.wall_time_s = millis(seconds);
        if seconds > 0.0 && stats.inserts > 0 {
            self.insert_throughput = Some(stats.inserts as f64 / seconds);
        }
    }
}

/// Destination for experiment rows.
pub trait RecordSink {
    fn push(&mut self, record: &ExperimentRecord) -> Result<(), ExperimentError>;
}

impl RecordSink for Vec<ExperimentRecord> {
    fn push(&mut self, record: &ExperimentRecord) -> Result<(), ExperimentError> {
        Vec::push(self, record.clone());
        Ok(())
    }
}

/// File stem shared by an experiment's CSV and its JSON sidecar.
pub fn experiment_stem(name: &str, seed: u64) -> String {
    format!("{name}-seed{seed}")
}

/// CSV writer that flushes after every row.
pub struct CsvSink {
    writer: csv::Writer<File>,
    path: PathBuf,
}

impl CsvSink {
    /// Creates `<dir>/<name>-seed<seed>.csv` plus a `.json` sidecar holding
    /// `config`.
    pub fn create<C: Serialize>(
        dir: &Path,
        name: &str,
        seed: u64,
        config: &C,
    ) -> Result<Self, ExperimentError> {
        std::fs::create_dir_all(dir)?;
        let stem = experiment_stem(name, seed);
        let sidecar = File::create(dir.join(format!("{stem}.json")))?;
        serde_json::to_writer_pretty(sidecar, config)?;
        let path = dir.join(format!("{stem}.csv"));
        let mut file = File::create(&path)?;
        writeln!(file, "# wincuckoo experiment records, schema v{SCHEMA_VERSION}")?;
        Ok(CsvSink {
            writer: csv::Writer::from_writer(file),
            path,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl RecordSink for CsvSink {
    fn push(&mut self, record: &ExperimentRecord) -> Result<(), ExperimentError> {
        self.writer.serialize(record)?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Reads a record CSV written by [`CsvSink`], checking the schema line.
pub fn read_records(path: &Path) -> Result<Vec<ExperimentRecord>, ExperimentError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let expected = format!("schema v{SCHEMA_VERSION}");
    if !first.starts_with('#') || !first.trim_end().ends_with(&expected) {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "missing or unsupported schema line").into());
    }
    let mut rows = csv::Reader::from_reader(reader);
    Ok(rows.deserialize().collect::<Result<_, _>>()?)
}

/// Builds `config` over its first `capacity` insert keys and describes the
/// result. Key generation is not timed.
fn timed_build(
    experiment: &str,
    config: &FilterConfig,
) -> Result<(ExperimentRecord, ShardedFilter, BuildStats), ExperimentError> {
    let keys = gen_keys(config.seed, config.capacity, Partition::Insert);
    let mut filter = ShardedFilter::new(config)?;
    let start = Instant::now();
    for &x in &keys {
        let _ = filter.insert_if_absent(x);
    }
    let seconds = start.elapsed().as_secs_f64();
    let stats = filter.merged_stats();
    let mut rec = ExperimentRecord::new(experiment, filter.geometry(), config.seed, config.max_walk);
    rec.n = config.capacity;
    rec.load_fraction = config.load_fraction;
    rec.describe(&filter, &stats, seconds);
    Ok((rec, filter, stats))
}

/// Builds at the configured load and measures the false positive rate over
/// `queries` disjoint keys.
pub fn fpr_experiment(config: &FilterConfig, queries: usize) -> Result<ExperimentRecord, ExperimentError> {
    let (mut rec, filter, _) = timed_build("fpr", config)?;
    let start = Instant::now();
    let rate = measure_fpr(&filter, queries, config.seed);
    let seconds = start.elapsed().as_secs_f64();
    rec.empirical_fpr = Some(rate);
    if seconds > 0.0 && queries > 0 {
        rec.lookup_throughput = Some(queries as f64 / seconds);
    }
    Ok(rec)
}

/// FPR over every combination of the given variants, group sizes and `k`.
pub fn fpr_grid(
    base: &FilterConfig,
    variants: &[Variant],
    ls: &[usize],
    ks: &[u32],
    queries: usize,
    sink: &mut dyn RecordSink,
) -> Result<(), ExperimentError> {
    for &variant in variants {
        for &l in ls {
            for &k in ks {
                let config = FilterConfig { variant, l, k, ..base.clone() };
                sink.push(&fpr_experiment(&config, queries)?)?;
            }
        }
    }
    Ok(())
}

/// How the seeds change between repeats of a load experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedVariation {
    /// New key stream, fixed hash functions.
    Keys,
    /// New hash functions, fixed key stream.
    Hashes,
    /// Both change together.
    Joint,
}

impl SeedVariation {
    pub fn name(self) -> &'static str {
        match self {
            SeedVariation::Keys => "keys",
            SeedVariation::Hashes => "hashes",
            SeedVariation::Joint => "joint",
        }
    }

    /// (key seed, hash seed) for repeat `r`.
    pub fn seeds(self, base: u64, r: u64) -> (u64, u64) {
        match self {
            SeedVariation::Keys => (base + r, base),
            SeedVariation::Hashes => (base, base + r),
            SeedVariation::Joint => (base + r, base + r),
        }
    }
}

/// Parameters of an achievable-load run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadExperiment {
    pub variant: Variant,
    pub l: usize,
    pub k: u32,
    /// Requested slot count; XOR addressing rounds it up.
    pub slots: usize,
    pub max_walks: Vec<u32>,
    pub repeats: u64,
    pub seed: u64,
    pub variation: SeedVariation,
}

/// Inserts keys without duplicate checks until the first insertion fails and
/// reports the load reached at that point.
pub fn achievable_load(
    variant: Variant,
    l: usize,
    k: u32,
    slots: usize,
    max_walk: u32,
    key_seed: u64,
    hash_seed: u64,
) -> Result<ExperimentRecord, ExperimentError> {
    let geometry = size_for_load(slots, 1.0, variant, l, k, 1)?.geometry;
    let config = FilterConfig::new(variant, l, k, slots)
        .with_seed(hash_seed)
        .with_max_walk(max_walk);
    let mut filter = ShardedFilter::from_layout(
        Layout::new(geometry, config.multipliers())?,
        hash_seed,
        max_walk,
    );
    // the table holds at most total_slots keys, so one more always ends the run
    let keys = gen_keys(key_seed, geometry.total_slots() + 1, Partition::Insert);
    let start = Instant::now();
    let mut offered = 0;
    for &x in &keys {
        offered += 1;
        match filter.insert(x) {
            Ok(Insertion::Stored { .. }) => {}
            _ => break,
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    let stats = filter.merged_stats();
    let mut rec = ExperimentRecord::new("load-threshold", &geometry, hash_seed, max_walk);
    rec.key_seed = key_seed;
    rec.hash_seed = hash_seed;
    rec.n = offered;
    rec.load_fraction = 1.0;
    rec.describe(&filter, &stats, seconds);
    Ok(rec)
}

/// Runs every `max_walk` in the grid `repeats` times.
pub fn achievable_load_experiment(
    exp: &LoadExperiment,
    sink: &mut dyn RecordSink,
) -> Result<(), ExperimentError> {
    for &max_walk in &exp.max_walks {
        for r in 0..exp.repeats {
            let (key_seed, hash_seed) = exp.variation.seeds(exp.seed, r);
            let mut rec = achievable_load(exp.variant, exp.l, exp.k, exp.slots, max_walk, key_seed, hash_seed)?;
            rec.seed = exp.seed;
            rec.seed_variation = Some(exp.variation.name().to_string());
            sink.push(&rec)?;
        }
    }
    Ok(())
}

/// Spread of achieved load over the repeats of one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub variant: Variant,
    pub l: usize,
    pub max_walk: u32,
    pub seed_variation: Option<String>,
    pub runs: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Groups load records by (variant, l, max_walk, seed variation), in order of
/// first appearance.
pub fn summarize_loads(records: &[ExperimentRecord]) -> Vec<LoadSummary> {
    let mut out: Vec<LoadSummary> = Vec::new();
    for rec in records {
        let pos = out.iter().position(|s| {
            s.variant == rec.variant
                && s.l == rec.l
                && s.max_walk == rec.max_walk
                && s.seed_variation == rec.seed_variation
        });
        let x = rec.achieved_load;
        match pos {
            Some(i) => {
                let s = &mut out[i];
                s.mean = (s.mean * s.runs as f64 + x) / (s.runs + 1) as f64;
                s.runs += 1;
                s.min = s.min.min(x);
                s.max = s.max.max(x);
            }
            None => out.push(LoadSummary {
                variant: rec.variant,
                l: rec.l,
                max_walk: rec.max_walk,
                seed_variation: rec.seed_variation.clone(),
                runs: 1,
                mean: x,
                min: x,
                max: x,
            }),
        }
    }
    out
}

/// One bin of an eviction-count histogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub variant: Variant,
    pub l: usize,
    pub k: u32,
    pub seed: u64,
    pub evictions: u32,
    pub count: u64,
}

/// Writes histogram rows to `<dir>/walk-hist-bins-seed<seed>.csv`.
pub fn write_histogram_csv(dir: &Path, seed: u64, rows: &[HistogramRow]) -> Result<PathBuf, ExperimentError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.csv", experiment_stem("walk-hist-bins", seed)));
    let mut file = File::create(&path)?;
    writeln!(file, "# wincuckoo walk histogram, schema v{SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(path)
}

/// Builds `config` with its capacity of keys and returns the summary record
/// and the full histogram of evictions per stored key.
pub fn walk_histogram_experiment(
    config: &FilterConfig,
) -> Result<(ExperimentRecord, Vec<HistogramRow>), ExperimentError> {
    let (rec, _, stats) = timed_build("walk-hist", config)?;
    let rows = stats
        .walk_histogram
        .iter()
        .map(|(&evictions, &count)| HistogramRow {
            variant: config.variant,
            l: config.l,
            k: config.k,
            seed: config.seed,
            evictions,
            count,
        })
        .collect();
    Ok((rec, rows))
}

/// Grid for [`sweep_time_memory`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeMemorySweep {
    pub variant: Variant,
    pub l: usize,
    pub k: u32,
    pub n: usize,
    /// Absolute target loads.
    pub loads: Vec<f64>,
    pub seed: u64,
    pub max_walk: u32,
}

/// Build time and memory for `n` keys at each target load.
pub fn sweep_time_memory(sweep: &TimeMemorySweep, sink: &mut dyn RecordSink) -> Result<(), ExperimentError> {
    let TimeMemorySweep { variant, l, k, n, seed, max_walk, .. } = *sweep;
    let keys = gen_keys(seed, n, Partition::Insert);
    let mult = FilterConfig::new(variant, l, k, n).with_seed(seed).multipliers();
    for &load in &sweep.loads {
        let geometry = size_for_load(n, load, variant, l, k, 1)?.geometry;
        let mut filter = ShardedFilter::from_layout(Layout::new(geometry, mult)?, seed, max_walk);
        let start = Instant::now();
        for &x in &keys {
            let _ = filter.insert_if_absent(x);
        }
        let seconds = start.elapsed().as_secs_f64();
        let stats = filter.merged_stats();
        let mut rec = ExperimentRecord::new("time-memory", &geometry, seed, max_walk);
        rec.n = n;
        rec.load_fraction = load / geometry.threshold();
        rec.describe(&filter, &stats, seconds);
        sink.push(&rec)?;
    }
    Ok(())
}

/// Operation measured by [`bench_throughput`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMode {
    Insert,
    LookupHit,
    LookupMiss,
    LookupMixed,
}

impl BenchMode {
    pub const ALL: [BenchMode; 4] = [
        BenchMode::Insert,
        BenchMode::LookupHit,
        BenchMode::LookupMiss,
        BenchMode::LookupMixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchMode::Insert => "insert",
            BenchMode::LookupHit => "lookup-hit",
            BenchMode::LookupMiss => "lookup-miss",
            BenchMode::LookupMixed => "lookup-mixed",
        }
    }
}

impl std::str::FromStr for BenchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BenchMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// Mean wall-clock throughput over `runs` repetitions.
///
/// Insert mode builds the whole filter per run; with more than one shard the
/// build is parallel with one consumer per shard and the key stream is
/// generated inside the timed region. Lookup modes build once and then query
/// `config.capacity` keys with `threads` threads; mixed lookups alternate
/// inserted and fresh keys.
pub fn bench_throughput(
    config: &FilterConfig,
    mode: BenchMode,
    threads: usize,
    runs: usize,
) -> Result<ExperimentRecord, ExperimentError> {
    let runs = runs.max(1);
    let threads = threads.max(1);
    let n = config.capacity;
    let mut times = Vec::with_capacity(runs);
    let (filter, stats) = if mode == BenchMode::Insert {
        let mut last = None;
        for _ in 0..runs {
            let (report, start) = if config.shards > 1 {
                let start = Instant::now();
                let keys = KeyStream::new(config.seed, Partition::Insert).take(n);
                (ShardedFilter::build_parallel(config, keys, ParallelOptions::default())?, start)
            } else {
                let keys = gen_keys(config.seed, n, Partition::Insert);
                let start = Instant::now();
                (ShardedFilter::build_sequential(config, keys)?, start)
            };
            times.push(start.elapsed().as_secs_f64());
            last = Some(report);
        }
        let report = last.expect("at least one run");
        (report.filter, report.stats)
    } else {
        let report = ShardedFilter::build_sequential(config, gen_keys(config.seed, n, Partition::Insert))?;
        let queries = match mode {
            BenchMode::LookupHit => gen_keys(config.seed, n, Partition::Insert),
            BenchMode::LookupMiss => gen_keys(config.seed, n, Partition::Query),
            _ => gen_keys(config.seed, n, Partition::Insert)
                .into_iter()
                .zip(KeyStream::new(config.seed, Partition::Query))
                .flat_map(|(a, b)| [a, b])
                .take(n)
                .collect(),
        };
        for _ in 0..runs {
            let start = Instant::now();
            let positives = report.filter.count_parallel(&queries, threads);
            times.push(start.elapsed().as_secs_f64());
            std::hint::black_box(positives);
        }
        (report.filter, report.stats)
    };
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let mut rec = ExperimentRecord::new("bench", filter.geometry(), config.seed, config.max_walk);
    rec.n = n;
    rec.load_fraction = config.load_fraction;
    rec.mode = Some(mode.name().to_string());
    rec.describe(&filter, &stats, mean);
    rec.insert_throughput = None;
    let rate = if mean > 0.0 { Some(n as f64 / mean) } else { None };
    if mode == BenchMode::Insert {
        rec.threads = config.shards;
        rec.insert_throughput = rate;
    } else {
        rec.threads = threads;
        rec.lookup_throughput = rate;
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_tagged() {
        assert_eq!(gen_keys(5, 1000, Partition::Insert), gen_keys(5, 1000, Partition::Insert));
        assert_ne!(gen_keys(5, 10, Partition::Insert), gen_keys(6, 10, Partition::Insert));
        assert!(gen_keys(1, 10_000, Partition::Insert).iter().all(|x| x >> 63 == 0));
        assert!(gen_keys(1, 10_000, Partition::Query).iter().all(|x| x >> 63 == 1));
    }

    #[test]
    fn empty_filter_has_no_false_positives() {
        let f = ShardedFilter::new(&FilterConfig::new(Variant::OffsetWindowed, 2, 8, 1000)).unwrap();
        assert_eq!(measure_fpr(&f, 10_000, 1), 0.0);
        assert_eq!(measure_fpr(&f, 0, 1), 0.0);
    }

    #[test]
    fn throughput_is_written_in_scientific_notation() {
        let config = FilterConfig::new(Variant::OffsetBucketed, 4, 8, 2000);
        let rec = fpr_experiment(&config, 10_000).unwrap();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(&rec).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        let row = text.lines().nth(1).unwrap();
        let header: Vec<_> = text.lines().next().unwrap().split(',').collect();
        let cols: Vec<_> = row.split(',').collect();
        let i = header.iter().position(|&h| h == "insert_throughput").unwrap();
        assert!(cols[i].contains('e'), "{}", cols[i]);
    }

    #[test]
    fn load_summary_statistics() {
        let mut recs = Vec::new();
        for (mw, load) in [(1, 0.5), (1, 0.7), (10, 0.9)] {
            let mut r = achievable_load(Variant::OffsetBucketed, 2, 8, 200, 1, 0, 0).unwrap();
            r.max_walk = mw;
            r.achieved_load = load;
            recs.push(r);
        }
        let s = summarize_loads(&recs);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].runs, 2);
        assert!((s[0].mean - 0.6).abs() < 1e-12);
        assert_eq!((s[0].min, s[0].max), (0.5, 0.7));
        assert_eq!(s[1].mean, 0.9);
    }

    #[test]
    fn achievable_load_stops_at_first_failure() {
        let rec = achievable_load(Variant::OffsetWindowed, 2, 8, 10_000, 100, 3, 4).unwrap();
        assert_eq!(rec.failures, 1);
        assert_eq!(rec.n, rec.n_inserted + 1);
        assert!(rec.achieved_load > 0.8 && rec.achieved_load < 1.0);
        assert!((rec.overhead_c - rec.s as f64 * rec.q as f64 / (rec.n_inserted as f64 * 8.0)).abs() < 1e-12);
    }

    #[test]
    fn bench_modes_report_their_throughput() {
        let config = FilterConfig::new(Variant::OffsetWindowed, 2, 10, 5000);
        for mode in BenchMode::ALL {
            let rec = bench_throughput(&config, mode, 2, 3).unwrap();
            assert_eq!(rec.mode.as_deref(), Some(mode.name()));
            let (set, unset) = if mode == BenchMode::Insert {
                (rec.insert_throughput, rec.lookup_throughput)
            } else {
                (rec.lookup_throughput, rec.insert_throughput)
            };
            assert!(set.unwrap() > 0.0);
            assert!(unset.is_none());
        }
    }
}
