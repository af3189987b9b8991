//! Sharded filters and parallel construction.
//!
//! Keys are routed to one of `F` independent shards by a dedicated hash. During
//! a parallel build the calling thread acts as the only producer: it appends
//! each key to the current buffer of the key's shard and hands full buffers to
//! that shard's consumer thread by flipping an atomic flag. Each shard has a
//! small ring of buffers that producer and consumer visit in the same order,
//! so every shard sees its keys in stream order and the result is identical
//! to a sequential build.

use std::cell::UnsafeCell;
use std::hint;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicBool, AtomicU8, Ordering};
use std::thread;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::config::FilterConfig;
use crate::error::{ConfigError, FormatError, InsertError};
use crate::filter::{read_array, read_u32, BuildStats, CuckooShard, Deletion, Insertion, FORMAT_VERSION};
use crate::layout::{Geometry, Layout};

const FILE_MAGIC: [u8; 4] = *b"WCKM";

const WRITABLE: u8 = 0;
const READY: u8 = 1;

const SPIN_LIMIT: u32 = 128;

/// `F` shards with identical geometry and hash parameters.
#[derive(Clone, Debug)]
pub struct ShardedFilter {
    layout: Layout,
    shards: Vec<CuckooShard>,
}

/// Filter plus merged statistics from a build. A failed build stays queryable.
#[derive(Debug)]
pub struct BuildReport {
    pub filter: ShardedFilter,
    pub stats: BuildStats,
}

impl BuildReport {
    pub fn failed(&self) -> bool {
        self.stats.failures > 0
    }
}

/// Tuning for [`ShardedFilter::build_parallel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParallelOptions {
    pub buffers_per_shard: usize,
    pub buffer_capacity: usize,
    /// Injects random stalls into producer and consumers (stress testing).
    pub delay_seed: Option<u64>,
}

impl Default for ParallelOptions {
    fn default() -> Self {
        ParallelOptions {
            buffers_per_shard: 4,
            buffer_capacity: 1 << 14,
            delay_seed: None,
        }
    }
}

impl ShardedFilter {
    pub fn new(config: &FilterConfig) -> Result<Self, ConfigError> {
        Ok(Self::from_layout(config.layout()?, config.seed, config.max_walk))
    }

    /// Empty filter over an explicit layout.
    pub fn from_layout(layout: Layout, seed: u64, max_walk: u32) -> Self {
        let shards = (0..layout.geometry.shards)
            .map(|i| CuckooShard::new(layout.clone(), seed, i, max_walk))
            .collect();
        ShardedFilter { layout, shards }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.layout.geometry
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn shards(&self) -> &[CuckooShard] {
        &self.shards
    }

    #[inline]
    pub fn route(&self, x: u64) -> usize {
        self.layout.hashes.subfilter_of(x)
    }

    pub fn insert(&mut self, x: u64) -> Result<Insertion, InsertError> {
        let s = self.route(x);
        self.shards[s].insert(x)
    }

    pub fn insert_if_absent(&mut self, x: u64) -> Result<Insertion, InsertError> {
        let s = self.route(x);
        self.shards[s].insert_if_absent(x)
    }

    #[inline]
    pub fn contains(&self, x: u64) -> bool {
        self.shards[self.route(x)].contains(x)
    }

    pub fn delete(&mut self, x: u64) -> Deletion {
        let s = self.route(x);
        self.shards[s].delete(x)
    }

    /// Stored fingerprints over all shards.
    pub fn len(&self) -> usize {
        self.shards.iter().map(CuckooShard::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn occupied_slots(&self) -> usize {
        self.shards.iter().map(|s| s.table().occupied()).sum()
    }

    pub fn load_factor(&self) -> f64 {
        self.occupied_slots() as f64 / self.geometry().total_slots() as f64
    }

    /// Overhead factor `s*q / (n*k)` for the keys currently stored.
    pub fn overhead(&self) -> f64 {
        self.geometry().overhead(self.len())
    }

    pub fn memory_bytes(&self) -> usize {
        self.shards.iter().map(|s| s.table().memory_bytes()).sum()
    }

    /// Element-wise sum of the shard statistics.
    pub fn merged_stats(&self) -> BuildStats {
        let mut total = BuildStats::default();
        for s in &self.shards {
            total.merge(&s.stats());
        }
        total
    }

    /// Single-threaded construction with lookup-and-insert.
    pub fn build_sequential<I>(config: &FilterConfig, keys: I) -> Result<BuildReport, ConfigError>
    where
        I: IntoIterator<Item = u64>,
    {
        let mut filter = ShardedFilter::new(config)?;
        for x in keys {
            // a full shard keeps rejecting; the failure is visible in the stats
            let _ = filter.insert_if_absent(x);
        }
        let stats = filter.merged_stats();
        Ok(BuildReport { filter, stats })
    }

    /// One consumer thread per shard fed by the calling thread through
    /// lock-free buffers.
    pub fn build_parallel<I>(
        config: &FilterConfig,
        keys: I,
        opts: ParallelOptions,
    ) -> Result<BuildReport, ConfigError>
    where
        I: IntoIterator<Item = u64>,
    {
        let filter = ShardedFilter::new(config)?;
        Ok(filter.fill_parallel(keys, opts))
    }

    /// Inserts `keys` with one consumer thread per shard.
    pub fn fill_parallel<I>(self, keys: I, opts: ParallelOptions) -> BuildReport
    where
        I: IntoIterator<Item = u64>,
    {
        assert!(opts.buffers_per_shard >= 2, "need at least two buffers per shard");
        assert!(opts.buffer_capacity >= 1);
        let ShardedFilter { layout, shards } = self;
        let channels: Vec<ShardChannel> = (0..shards.len())
            .map(|_| ShardChannel::new(opts.buffers_per_shard, opts.buffer_capacity))
            .collect();

        let shards = thread::scope(|scope| {
            let handles: Vec<_> = shards
                .into_iter()
                .zip(&channels)
                .enumerate()
                .map(|(i, (mut shard, chan))| {
                    let delay = opts.delay_seed.map(|s| Stall::new(s, 1 + i as u64));
                    scope.spawn(move || {
                        chan.consume(delay, |x| {
                            let _ = shard.insert_if_absent(x);
                        });
                        shard
                    })
                })
                .collect();

            produce(&layout, &channels, keys, opts);

            handles
                .into_iter()
                .map(|h| h.join().expect("shard consumer panicked"))
                .collect::<Vec<_>>()
        });

        let filter = ShardedFilter { layout, shards };
        let stats = filter.merged_stats();
        BuildReport { filter, stats }
    }

    /// Answers `keys` in order using `threads` reader threads.
    pub fn query_parallel(&self, keys: &[u64], threads: usize) -> Vec<bool> {
        let mut out = vec![false; keys.len()];
        if keys.is_empty() {
            return out;
        }
        let threads = threads.max(1);
        let chunk = keys.len().div_ceil(threads);
        thread::scope(|scope| {
            for (ks, os) in keys.chunks(chunk).zip(out.chunks_mut(chunk)) {
                scope.spawn(move || {
                    for (o, &x) in os.iter_mut().zip(ks) {
                        *o = self.contains(x);
                    }
                });
            }
        });
        out
    }

    /// Number of `keys` reported present, using `threads` reader threads.
    pub fn count_parallel(&self, keys: &[u64], threads: usize) -> usize {
        if keys.is_empty() {
            return 0;
        }
        let chunk = keys.len().div_ceil(threads.max(1));
        thread::scope(|scope| {
            let handles: Vec<_> = keys
                .chunks(chunk)
                .map(|ks| scope.spawn(move || ks.iter().filter(|&&x| self.contains(x)).count()))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).sum()
        })
    }

    /// Writes a file header with shard offsets followed by every shard.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<(), FormatError> {
        let mut blobs = Vec::with_capacity(self.shards.len());
        for s in &self.shards {
            let mut b = Vec::new();
            s.save(&mut b)?;
            blobs.push(b);
        }
        let header_len = 16 + 8 * blobs.len() as u64;
        w.write_all(&FILE_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(blobs.len() as u32).to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        let mut offset = header_len;
        for b in &blobs {
            w.write_all(&offset.to_le_bytes())?;
            offset += b.len() as u64;
        }
        for b in &blobs {
            w.write_all(b)?;
        }
        Ok(())
    }

    pub fn load<R: Read>(r: &mut R) -> Result<Self, FormatError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = bytes.as_slice();
        let magic: [u8; 4] = read_array(&mut cur)?;
        if magic != FILE_MAGIC {
            return Err(FormatError::BadMagic(magic));
        }
        let version = read_u32(&mut cur)?;
        if version != FORMAT_VERSION {
            return Err(FormatError::Version(version));
        }
        let count = read_u32(&mut cur)? as usize;
        let _reserved = read_u32(&mut cur)?;
        if count == 0 {
            return Err(FormatError::Inconsistent("no shards".into()));
        }
        let mut offsets = Vec::with_capacity(count);
        for _ in 0..count {
            offsets.push(u64::from_le_bytes(read_array(&mut cur)?) as usize);
        }
        let mut shards: Vec<CuckooShard> = Vec::with_capacity(count);
        for (i, &off) in offsets.iter().enumerate() {
            let mut slice = bytes.get(off..).ok_or(FormatError::Truncated)?;
            let shard = CuckooShard::load(&mut slice)?;
            if shard.ordinal() != i || shard.geometry().shards != count {
                return Err(FormatError::Inconsistent(format!(
                    "shard {i} records ordinal {} of {}",
                    shard.ordinal(),
                    shard.geometry().shards
                )));
            }
            if let Some(first) = shards.first() {
                if first.layout() != shard.layout() || first.seed() != shard.seed() {
                    return Err(FormatError::Inconsistent(format!("shard {i} layout differs from shard 0")));
                }
            }
            shards.push(shard);
        }
        Ok(ShardedFilter {
            layout: shards[0].layout().clone(),
            shards,
        })
    }
}

/// A fixed-capacity key batch owned by the producer while `WRITABLE` and by
/// the consumer while `READY`.
struct KeyBuffer {
    state: AtomicU8,
    keys: UnsafeCell<Vec<u64>>,
}

// SAFETY: `keys` is only touched by the side that owns the buffer according to
// `state`; ownership moves with release stores and acquire loads.
unsafe impl Sync for KeyBuffer {}

struct ShardChannel {
    buffers: Vec<KeyBuffer>,
    done: AtomicBool,
}

impl ShardChannel {
    fn new(count: usize, capacity: usize) -> Self {
        ShardChannel {
            buffers: (0..count)
                .map(|_| KeyBuffer {
                    state: AtomicU8::new(WRITABLE),
                    keys: UnsafeCell::new(Vec::with_capacity(capacity)),
                })
                .collect(),
            done: AtomicBool::new(false),
        }
    }

    fn consume(&self, mut stall: Option<Stall>, mut sink: impl FnMut(u64)) {
        let mut next = 0;
        let mut spins = 0;
        loop {
            let buf = &self.buffers[next];
            if buf.state.load(Ordering::Acquire) == READY {
                if let Some(s) = stall.as_mut() {
                    s.maybe_stall();
                }
                // SAFETY: READY observed with acquire; the producer does not
                // touch this buffer until we store WRITABLE.
                let keys = unsafe { &mut *buf.keys.get() };
                for &x in keys.iter() {
                    sink(x);
                }
                keys.clear();
                buf.state.store(WRITABLE, Ordering::Release);
                next = (next + 1) % self.buffers.len();
                spins = 0;
            } else if self.done.load(Ordering::Acquire) {
                // the final publish happens before `done`, so re-check once
                if buf.state.load(Ordering::Acquire) != READY {
                    return;
                }
            } else {
                backoff(&mut spins);
            }
        }
    }
}

fn produce<I>(layout: &Layout, channels: &[ShardChannel], keys: I, opts: ParallelOptions)
where
    I: IntoIterator<Item = u64>,
{
    let shards = channels.len();
    let mut current = vec![0usize; shards];
    let mut owned = vec![false; shards];
    let mut stall = opts.delay_seed.map(|s| Stall::new(s, 0));

    for x in keys {
        let s = layout.hashes.subfilter_of(x);
        let chan = &channels[s];
        let buf = &chan.buffers[current[s]];
        if !owned[s] {
            let mut spins = 0;
            while buf.state.load(Ordering::Acquire) != WRITABLE {
                backoff(&mut spins);
            }
            owned[s] = true;
        }
        // SAFETY: WRITABLE observed with acquire and not yet published.
        let batch = unsafe { &mut *buf.keys.get() };
        batch.push(x);
        if batch.len() == opts.buffer_capacity {
            if let Some(st) = stall.as_mut() {
                st.maybe_stall();
            }
            buf.state.store(READY, Ordering::Release);
            owned[s] = false;
            current[s] = (current[s] + 1) % chan.buffers.len();
        }
    }

    for (s, chan) in channels.iter().enumerate() {
        if owned[s] {
            let buf = &chan.buffers[current[s]];
            // SAFETY: still owned by the producer.
            if unsafe { !(*buf.keys.get()).is_empty() } {
                buf.state.store(READY, Ordering::Release);
            }
        }
        chan.done.store(true, Ordering::Release);
    }
}

#[inline]
fn backoff(spins: &mut u32) {
    if *spins < SPIN_LIMIT {
        *spins += 1;
        hint::spin_loop();
    } else {
        thread::yield_now();
    }
}

/// Random pauses used to shake out ordering bugs in the buffer handoff.
struct Stall {
    rng: Xoshiro256PlusPlus,
}

impl Stall {
    fn new(seed: u64, role: u64) -> Self {
        Stall {
            rng: Xoshiro256PlusPlus::seed_from_u64(crate::hashing::derive_seed(seed, role)),
        }
    }

    fn maybe_stall(&mut self) {
        match self.rng.random_range(0..8u32) {
            0 => thread::yield_now(),
            1 => {
                for _ in 0..self.rng.random_range(0..2_000u32) {
                    hint::spin_loop();
                }
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::Variant;

    fn keys(n: u64) -> Vec<u64> {
        (0..n).map(|i| i.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x1234_5678).collect()
    }

    #[test]
    fn single_shard_parallel_equals_sequential() {
        let config = FilterConfig::new(Variant::OffsetWindowed, 2, 10, 20_000).with_seed(4);
        let ks = keys(20_000);
        let seq = ShardedFilter::build_sequential(&config, ks.iter().copied()).unwrap();
        let par = ShardedFilter::build_parallel(&config, ks.iter().copied(), ParallelOptions::default()).unwrap();
        assert_eq!(seq.filter.shards()[0].table(), par.filter.shards()[0].table());
        assert_eq!(seq.stats, par.stats);
    }

    #[test]
    fn tiny_buffers_still_deliver_everything() {
        let config = FilterConfig::new(Variant::OffsetBucketed, 4, 8, 5_000)
            .with_seed(8)
            .with_shards(3);
        let ks = keys(5_000);
        let opts = ParallelOptions {
            buffers_per_shard: 2,
            buffer_capacity: 1,
            delay_seed: Some(5),
        };
        let par = ShardedFilter::build_parallel(&config, ks.iter().copied(), opts).unwrap();
        let seq = ShardedFilter::build_sequential(&config, ks.iter().copied()).unwrap();
        for (a, b) in par.filter.shards().iter().zip(seq.filter.shards()) {
            assert_eq!(a.table(), b.table());
        }
        assert!(ks.iter().all(|&x| par.filter.contains(x)));
    }

    #[test]
    fn empty_stream() {
        let config = FilterConfig::new(Variant::OffsetWindowed, 2, 10, 100).with_shards(2);
        let r = ShardedFilter::build_parallel(&config, std::iter::empty(), ParallelOptions::default()).unwrap();
        assert!(r.filter.is_empty());
        assert_eq!(r.stats.inserts, 0);
    }

    #[test]
    fn query_parallel_preserves_order() {
        let config = FilterConfig::new(Variant::OffsetWindowed, 4, 12, 10_000).with_shards(2);
        let ks = keys(10_000);
        let r = ShardedFilter::build_sequential(&config, ks[..5_000].iter().copied()).unwrap();
        let one = r.filter.query_parallel(&ks, 1);
        let many = r.filter.query_parallel(&ks, 7);
        assert_eq!(one, many);
        assert!(one[..5_000].iter().all(|&b| b));
        let seq: Vec<bool> = ks.iter().map(|&x| r.filter.contains(x)).collect();
        assert_eq!(one, seq);
        assert_eq!(r.filter.count_parallel(&ks, 3), seq.iter().filter(|&&b| b).count());
    }

    #[test]
    fn merged_stats_of_single_shard_is_identity() {
        let config = FilterConfig::new(Variant::OffsetBucketed, 2, 10, 1_000);
        let r = ShardedFilter::build_sequential(&config, keys(1_000)).unwrap();
        assert_eq!(r.filter.merged_stats(), r.filter.shards()[0].stats());
        assert_eq!(r.stats.histogram_mass(), r.stats.inserts);
    }

    #[test]
    fn file_round_trip_and_errors() {
        let config = FilterConfig::new(Variant::XorBucketed, 4, 10, 3_000).with_shards(3).with_seed(2);
        let r = ShardedFilter::build_sequential(&config, keys(3_000)).unwrap();
        let mut buf = Vec::new();
        r.filter.save(&mut buf).unwrap();
        let back = ShardedFilter::load(&mut buf.as_slice()).unwrap();
        let mut again = Vec::new();
        back.save(&mut again).unwrap();
        assert_eq!(buf, again);

        let mut bad = buf.clone();
        bad[1] = 0;
        assert!(matches!(ShardedFilter::load(&mut bad.as_slice()), Err(FormatError::BadMagic(_))));
        assert!(matches!(
            ShardedFilter::load(&mut &buf[..buf.len() - 1]),
            Err(FormatError::Truncated)
        ));
    }
}
