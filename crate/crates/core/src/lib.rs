//! Cuckoo filters with offset-based alternative addressing and an optional
//! overlapping-window layout.
//!
//! Three layouts are provided:
//!
//! * [`Variant::XorBucketed`]: the classic filter with a power-of-two number of
//!   buckets and XOR addressing,
//! * [`Variant::OffsetBucketed`]: disjoint buckets of any count, where the
//!   alternative bucket is reached by a fingerprint-dependent offset and a
//!   stored choice bit records the direction,
//! * [`Variant::OffsetWindowed`]: overlapping windows of `l` slots; each slot
//!   additionally stores its offset inside the window.
//!
//! All variants use `k + 1 + log2(l)` bits per slot for a false positive rate
//! of about `2^-k`. A filter is split into independent subfilters that can be
//! built by one thread each.
//!
//! ```
//! use wincuckoo::{FilterConfig, ShardedFilter, Variant};
//!
//! let config = FilterConfig::new(Variant::OffsetWindowed, 2, 10, 10_000);
//! let mut filter = ShardedFilter::new(&config).unwrap();
//! for x in 0..10_000u64 {
//!     filter.insert_if_absent(x * 7919).unwrap();
//! }
//! assert!(filter.contains(7919));
//! ```

pub mod concurrent;
pub mod config;
pub mod error;
pub mod filter;
pub mod hashing;
pub mod layout;
pub mod table;
pub mod workload;

pub use concurrent::{BuildReport, ParallelOptions, ShardedFilter};
pub use config::FilterConfig;
pub use error::{ConfigError, FormatError, InsertError};
pub use filter::{BuildStats, CuckooShard, Deletion, Insertion, WalkSummary, DEFAULT_MAX_WALK};
pub use layout::{Geometry, Layout, Location, Variant};
