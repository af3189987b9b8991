use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::anyhow;
use serde_json::json;
use wincuckoo::workload::{
    achievable_load_experiment, bench_throughput, fpr_grid, summarize_loads, sweep_time_memory,
    walk_histogram_experiment, write_histogram_csv, CsvSink, ExperimentError, ExperimentRecord, KeyStream,
    LoadExperiment, Partition, RecordSink, SeedVariation, TimeMemorySweep,
};
use wincuckoo::{ConfigError, FilterConfig, FormatError, ParallelOptions, ShardedFilter};

use crate::keyio::{read_keys, write_keys};
use crate::{BenchArgs, BuildArgs, Command, ExperimentCommand, Failure, GenKeysArgs, GridArgs, InspectArgs, QueryArgs};

// stdout may be a closed pipe (`| head`); output is best effort there
macro_rules! out {
    ($($t:tt)*) => {{
        let _ = writeln!(io::stdout(), $($t)*);
    }};
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.into())
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure::Io(e.into())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(c) => c.into(),
            other => Failure::Io(other.into()),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.into())
    }
}

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Build(args) => build(args),
        Command::Query(args) => query(args),
        Command::Experiment(cmd) => experiment(cmd),
        Command::Bench(args) => bench(args),
        Command::GenKeys(args) => gen_keys(args),
        Command::Inspect(args) => inspect(args),
    }
}

fn load_filter(path: &Path) -> Result<ShardedFilter, Failure> {
    let file = File::open(path).map_err(|e| Failure::Io(anyhow!("opening filter {}: {e}", path.display())))?;
    Ok(ShardedFilter::load(&mut io::BufReader::new(file))?)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Warns when XOR addressing had to round the bucket count up.
fn check_rounding(config: &FilterConfig) -> Result<(), Failure> {
    let sizing = config.sizing()?;
    if sizing.rounded_up() {
        eprintln!(
            "warning: xor layout needs a power-of-two bucket count; rounded {} slots up to {}",
            sizing.unrounded_slots,
            sizing.geometry.total_slots()
        );
    }
    Ok(())
}

fn build(args: BuildArgs) -> Result<(), Failure> {
    let config = args.filter.config();
    let sizing = config.sizing()?;
    check_rounding(&config)?;
    let keys = match &args.input {
        Some(p) => read_keys(p, args.text).map_err(Failure::Io)?,
        None => KeyStream::new(config.seed, Partition::Insert).take(config.capacity).collect(),
    };
    let offered = keys.len();
    let start = Instant::now();
    let report = if config.shards > 1 {
        ShardedFilter::build_parallel(&config, keys, ParallelOptions::default())?
    } else {
        ShardedFilter::build_sequential(&config, keys)?
    };
    let seconds = start.elapsed().as_secs_f64();

    let mut out = BufWriter::new(File::create(&args.output)?);
    report.filter.save(&mut out)?;
    out.flush()?;

    let f = &report.filter;
    let stats = &report.stats;
    let blob = json!({
        "config": config,
        "geometry": f.geometry(),
        "keys_offered": offered,
        "inserted": stats.inserts,
        "duplicates": stats.duplicates,
        "failures": stats.failures,
        "stored": f.len(),
        "achieved_load": f.load_factor(),
        "walk": stats.walk_summary(),
        "wall_time_s": (seconds * 1000.0).round() / 1000.0,
        "predicted_overhead": sizing.predicted_overhead,
        "actual_overhead": f.overhead(),
        "memory_bytes": f.memory_bytes(),
        "bucket_rounding": sizing.rounded_up(),
    });
    let stats_path = args
        .stats
        .unwrap_or_else(|| args.output.with_extension("stats.json"));
    write_json(&stats_path, &blob)?;
    out!("{}", serde_json::to_string_pretty(&blob)?);
    if report.failed() {
        return Err(Failure::Build(format!(
            "{} insertion(s) failed; filter and stats were written but some keys may be missing",
            stats.failures
        )));
    }
    Ok(())
}

fn query(args: QueryArgs) -> Result<(), Failure> {
    let filter = load_filter(&args.filter)?;
    let keys = read_keys(&args.input, args.text).map_err(Failure::Io)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    if args.summary {
        let positives = filter.count_parallel(&keys, args.threads);
        let fraction = if keys.is_empty() { 0.0 } else { positives as f64 / keys.len() as f64 };
        let blob = json!({
            "queries": keys.len(),
            "positives": positives,
            "positive_fraction": fraction,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&blob)?)?;
    } else if args.threads > 1 {
        for hit in filter.query_parallel(&keys, args.threads) {
            writeln!(out, "{}", hit as u8)?;
        }
    } else {
        for &x in &keys {
            writeln!(out, "{}", filter.contains(x) as u8)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn gen_keys(args: GenKeysArgs) -> Result<(), Failure> {
    let partition = if args.query { Partition::Query } else { Partition::Insert };
    let keys = KeyStream::new(args.seed, partition).take(args.count);
    write_keys(&args.output, keys, args.text)?;
    Ok(())
}

fn inspect(args: InspectArgs) -> Result<(), Failure> {
    let filter = load_filter(&args.filter)?;
    let shards: Vec<_> = filter
        .shards()
        .iter()
        .map(|s| {
            json!({
                "ordinal": s.ordinal(),
                "occupied": s.table().occupied(),
                "stashed": s.stash().is_some(),
                "load": s.load_factor(),
            })
        })
        .collect();
    let first = &filter.shards()[0];
    let blob = json!({
        "geometry": filter.geometry(),
        "seed": first.seed(),
        "max_walk": first.max_walk(),
        "total_slots": filter.geometry().total_slots(),
        "stored": filter.len(),
        "load": filter.load_factor(),
        "overhead": filter.overhead(),
        "memory_bytes": filter.memory_bytes(),
        "shards": shards,
    });
    out!("{}", serde_json::to_string_pretty(&blob)?);
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    let config = args.filter.config();
    check_rounding(&config)?;
    let rec = bench_throughput(&config, args.mode, args.threads, args.runs)?;
    let blob = serde_json::to_value(&rec)?;
    out!("{}", serde_json::to_string_pretty(&blob)?);
    if let Some(p) = &args.output {
        write_json(p, &blob)?;
    }
    Ok(())
}

/// Writes rows to a CSV and keeps a copy for the printed summary.
struct Tee {
    csv: CsvSink,
    rows: Vec<ExperimentRecord>,
}

impl RecordSink for Tee {
    fn push(&mut self, record: &ExperimentRecord) -> Result<(), ExperimentError> {
        self.csv.push(record)?;
        self.rows.push(record.clone());
        Ok(())
    }
}

fn experiment(cmd: ExperimentCommand) -> Result<(), Failure> {
    match cmd {
        ExperimentCommand::Fpr {
            grid,
            ks,
            capacity,
            load_fraction,
            queries,
        } => {
            let base = FilterConfig::new(grid.variants[0], grid.ls[0], ks[0], capacity)
                .with_load_fraction(load_fraction)
                .with_max_walk(grid.max_walk)
                .with_seed(grid.seed);
            let sidecar = json!({
                "experiment": "fpr", "variants": grid.variants, "l": grid.ls, "k": ks,
                "capacity": capacity, "load_fraction": load_fraction, "queries": queries,
                "max_walk": grid.max_walk, "seed": grid.seed,
            });
            let mut sink = open_sink(&grid, "fpr", &sidecar)?;
            fpr_grid(&base, &grid.variants, &grid.ls, &ks, queries, &mut sink)?;
            for r in &sink.rows {
                let ratio = r.empirical_fpr.unwrap_or(0.0) * (r.k as f64).exp2();
                out!(
                    "{:<9} l={} k={:<2} fpr={:.3e} ratio={:.3} C={:.3}",
                    r.variant.name(),
                    r.l,
                    r.k,
                    r.empirical_fpr.unwrap_or(0.0),
                    ratio,
                    r.overhead_c
                );
            }
            report_path(&sink);
        }
        ExperimentCommand::LoadThreshold {
            grid,
            k,
            slots,
            max_walks,
            repeats,
            vary,
        } => {
            let variations = vary
                .iter()
                .map(|v| match v.as_str() {
                    "keys" => Ok(SeedVariation::Keys),
                    "hashes" => Ok(SeedVariation::Hashes),
                    "joint" => Ok(SeedVariation::Joint),
                    other => Err(Failure::Usage(anyhow!("unknown seed variation `{other}`"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let sidecar = json!({
                "experiment": "load-threshold", "variants": grid.variants, "l": grid.ls, "k": k,
                "slots": slots, "max_walks": max_walks, "repeats": repeats, "vary": vary,
                "seed": grid.seed,
            });
            let mut sink = open_sink(&grid, "load-threshold", &sidecar)?;
            for &variant in &grid.variants {
                for &l in &grid.ls {
                    for &variation in &variations {
                        let exp = LoadExperiment {
                            variant,
                            l,
                            k,
                            slots,
                            max_walks: max_walks.clone(),
                            repeats: repeats as u64,
                            seed: grid.seed,
                            variation,
                        };
                        achievable_load_experiment(&exp, &mut sink)?;
                    }
                }
            }
            for s in summarize_loads(&sink.rows) {
                out!(
                    "{:<9} l={} max_walk={:<6} vary={:<7} mean={:.4} min={:.4} max={:.4} runs={}",
                    s.variant.name(),
                    s.l,
                    s.max_walk,
                    s.seed_variation.as_deref().unwrap_or("-"),
                    s.mean,
                    s.min,
                    s.max,
                    s.runs
                );
            }
            report_path(&sink);
        }
        ExperimentCommand::WalkHist {
            grid,
            k,
            capacity,
            load_fraction,
        } => {
            let sidecar = json!({
                "experiment": "walk-hist", "variants": grid.variants, "l": grid.ls, "k": k,
                "capacity": capacity, "load_fraction": load_fraction, "max_walk": grid.max_walk,
                "seed": grid.seed,
            });
            let mut sink = open_sink(&grid, "walk-hist", &sidecar)?;
            let mut bins = Vec::new();
            for &variant in &grid.variants {
                for &l in &grid.ls {
                    let config = FilterConfig::new(variant, l, k, capacity)
                        .with_load_fraction(load_fraction)
                        .with_max_walk(grid.max_walk)
                        .with_seed(grid.seed);
                    let (rec, rows) = walk_histogram_experiment(&config)?;
                    sink.push(&rec)?;
                    out!(
                        "{:<9} l={} zero={:.4} p99={} max={}",
                        variant.name(),
                        l,
                        rec.zero_eviction_fraction,
                        rec.walk_p99,
                        rec.walk_max
                    );
                    bins.extend(rows);
                }
            }
            let path = write_histogram_csv(&grid.out_dir, grid.seed, &bins)?;
            eprintln!("wrote {}", path.display());
            report_path(&sink);
        }
        ExperimentCommand::TimeMemory {
            grid,
            k,
            capacity,
            loads,
        } => {
            let sidecar = json!({
                "experiment": "time-memory", "variants": grid.variants, "l": grid.ls, "k": k,
                "capacity": capacity, "loads": loads, "max_walk": grid.max_walk, "seed": grid.seed,
            });
            let mut sink = open_sink(&grid, "time-memory", &sidecar)?;
            for &variant in &grid.variants {
                for &l in &grid.ls {
                    let sweep = TimeMemorySweep {
                        variant,
                        l,
                        k,
                        n: capacity,
                        loads: loads.clone(),
                        seed: grid.seed,
                        max_walk: grid.max_walk,
                    };
                    sweep_time_memory(&sweep, &mut sink)?;
                }
            }
            for r in &sink.rows {
                out!(
                    "{:<9} l={} load={:.3} time={:.3}s bytes={} failures={}",
                    r.variant.name(),
                    r.l,
                    r.achieved_load,
                    r.wall_time_s,
                    r.memory_bytes,
                    r.failures
                );
            }
            report_path(&sink);
        }
    }
    Ok(())
}

fn open_sink(grid: &GridArgs, name: &str, sidecar: &serde_json::Value) -> Result<Tee, Failure> {
    let csv = CsvSink::create(&grid.out_dir, name, grid.seed, sidecar)?;
    Ok(Tee { csv, rows: Vec::new() })
}

fn report_path(sink: &Tee) {
    eprintln!("wrote {}", sink.csv.path().display());
}
