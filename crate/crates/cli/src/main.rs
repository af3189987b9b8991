//! `wincuckoo` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 build failure, 3 I/O or format
//! error.

mod commands;
mod keyio;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wincuckoo::workload::BenchMode;
use wincuckoo::{FilterConfig, Variant, DEFAULT_MAX_WALK};

#[derive(Parser, Debug)]
#[command(name = "wincuckoo", version, about = "Build, query and benchmark windowed Cuckoo filters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a filter from a key file (or generated keys) and write it to disk
    Build(BuildArgs),
    /// Query keys against a saved filter
    Query(QueryArgs),
    /// Run one of the experiment grids and write CSV records
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Measure insert or lookup throughput
    Bench(BenchArgs),
    /// Write a seeded key file
    GenKeys(GenKeysArgs),
    /// Print the header and statistics of a saved filter as JSON
    Inspect(InspectArgs),
}

fn parse_load_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1]"))
    }
}

fn parse_group_size(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(l @ (2 | 4)) => Ok(l),
        _ => Err(format!("`{s}` is not a supported group size (2 or 4)")),
    }
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(format!("{e}")),
    }
}

/// Parameters shared by every command that creates a filter.
#[derive(Args, Debug, Clone)]
pub struct FilterArgs {
    /// Layout: xor, bucketed or windowed
    #[arg(long, default_value = "windowed")]
    pub variant: Variant,
    /// Slots per bucket or window (2 or 4)
    #[arg(short, long, default_value_t = 2, value_parser = parse_group_size)]
    pub l: usize,
    /// Target false positive rate is 2^-k
    #[arg(short, long, default_value_t = 10)]
    pub k: u32,
    /// Number of keys the filter is sized for
    #[arg(short = 'n', long, default_value_t = 1_000_000, value_parser = parse_positive)]
    pub capacity: usize,
    /// Fraction of the layout's load threshold to size for
    #[arg(long, default_value_t = 0.98, value_parser = parse_load_fraction)]
    pub load_fraction: f64,
    /// Maximum evictions per insertion
    #[arg(long, default_value_t = DEFAULT_MAX_WALK)]
    pub max_walk: u32,
    /// Number of independent subfilters; more than one builds in parallel
    #[arg(short = 'F', long, default_value_t = 1, value_parser = parse_positive)]
    pub shards: usize,
    /// Seed for hash functions and generated keys
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl FilterArgs {
    pub fn config(&self) -> FilterConfig {
        FilterConfig::new(self.variant, self.l, self.k, self.capacity)
            .with_load_fraction(self.load_fraction)
            .with_max_walk(self.max_walk)
            .with_shards(self.shards)
            .with_seed(self.seed)
    }
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Key file; without it `capacity` keys are generated from the seed
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Key file holds one decimal key per line instead of raw little-endian u64
    #[arg(long)]
    pub text: bool,
    /// Filter file to write
    #[arg(short, long)]
    pub output: PathBuf,
    /// Stats JSON to write [default: <output>.stats.json]
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    /// Filter file written by `build`
    #[arg(short, long)]
    pub filter: PathBuf,
    /// Key file to query
    #[arg(short, long)]
    pub input: PathBuf,
    /// Key file holds one decimal key per line instead of raw little-endian u64
    #[arg(long)]
    pub text: bool,
    /// Print a JSON summary instead of one 0/1 per key
    #[arg(long)]
    pub summary: bool,
    /// Query threads
    #[arg(short, long, default_value_t = 1, value_parser = parse_positive)]
    pub threads: usize,
}

#[derive(Args, Debug)]
pub struct GenKeysArgs {
    /// Number of keys
    #[arg(short = 'n', long, default_value_t = 1_000_000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw from the query partition, disjoint from the insert partition
    #[arg(long)]
    pub query: bool,
    /// Write one decimal per line instead of raw little-endian u64
    #[arg(long)]
    pub text: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    /// Filter file written by `build`
    pub filter: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub filter: FilterArgs,
    /// insert, lookup-hit, lookup-miss or lookup-mixed
    #[arg(long, default_value = "lookup-hit")]
    pub mode: BenchMode,
    /// Lookup threads; insert mode uses one consumer per subfilter
    #[arg(short, long, default_value_t = 1, value_parser = parse_positive)]
    pub threads: usize,
    /// Repetitions averaged into the reported throughput
    #[arg(long, default_value_t = 3, value_parser = parse_positive)]
    pub runs: usize,
    /// Also write the JSON record here
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Grid flags shared by the experiments.
#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// Layouts to include
    #[arg(long, value_delimiter = ',', default_value = "xor,bucketed,windowed")]
    pub variants: Vec<Variant>,
    /// Group sizes to include
    #[arg(short, long = "l", value_delimiter = ',', default_value = "2", value_parser = parse_group_size)]
    pub ls: Vec<usize>,
    /// Seed for hash functions and keys
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum evictions per insertion
    #[arg(long, default_value_t = DEFAULT_MAX_WALK)]
    pub max_walk: u32,
    /// Directory for CSV and JSON output
    #[arg(long, default_value = "results")]
    pub out_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum ExperimentCommand {
    /// Empirical false positive rate over a grid of k
    Fpr {
        #[command(flatten)]
        grid: GridArgs,
        /// Fingerprint parameters to include
        #[arg(short, long = "k", value_delimiter = ',', default_value = "8,9,10,11,12")]
        ks: Vec<u32>,
        /// Keys inserted per filter
        #[arg(short = 'n', long, default_value_t = 1_000_000, value_parser = parse_positive)]
        capacity: usize,
        /// Fraction of the load threshold to fill to
        #[arg(long, default_value_t = 0.98, value_parser = parse_load_fraction)]
        load_fraction: f64,
        /// Disjoint query keys per filter
        #[arg(long, default_value_t = 10_000_000)]
        queries: usize,
    },
    /// Load reached by raw insertion until the first failure
    LoadThreshold {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(short, long, default_value_t = 10)]
        k: u32,
        /// Slots per filter
        #[arg(short, long, default_value_t = 1_000_000, value_parser = parse_positive)]
        slots: usize,
        /// Walk limits to sweep
        #[arg(long, value_delimiter = ',', default_value = "1,10,100,10000")]
        max_walks: Vec<u32>,
        /// Runs per grid point and seed variation
        #[arg(long, default_value_t = 5, value_parser = parse_positive)]
        repeats: usize,
        /// Seed variations: keys, hashes or joint
        #[arg(long, value_delimiter = ',', default_value = "keys,hashes")]
        vary: Vec<String>,
    },
    /// Histogram of evictions per insertion at the target load
    WalkHist {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(short, long, default_value_t = 10)]
        k: u32,
        #[arg(short = 'n', long, default_value_t = 1_000_000, value_parser = parse_positive)]
        capacity: usize,
        #[arg(long, default_value_t = 0.98, value_parser = parse_load_fraction)]
        load_fraction: f64,
    },
    /// Build time and memory over a grid of absolute loads
    TimeMemory {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(short, long, default_value_t = 10)]
        k: u32,
        #[arg(short = 'n', long, default_value_t = 1_000_000, value_parser = parse_positive)]
        capacity: usize,
        /// Absolute target loads
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8,0.85,0.88")]
        loads: Vec<f64>,
    },
}

/// Terminal failure with its exit code.
pub enum Failure {
    Usage(anyhow::Error),
    Build(String),
    Io(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Build(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(e) => eprintln!("error: {e:#}"),
                Failure::Build(msg) => eprintln!("build failed: {msg}"),
                Failure::Io(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}
