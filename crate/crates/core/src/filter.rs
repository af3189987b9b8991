//! A single Cuckoo filter shard.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{FormatError, InsertError};
use crate::hashing::{derive_seed, Multipliers};
use crate::layout::{Geometry, Layout, Location, SlotFields, Variant};
use crate::table::{find_empty_lane, find_match_lane, padded_words, ProbeMasks, SlotTable};

/// Default bound on evictions per insertion.
pub const DEFAULT_MAX_WALK: u32 = 10_000;

pub(crate) const SHARD_MAGIC: [u8; 4] = *b"WCKF";
pub(crate) const FORMAT_VERSION: u32 = 1;

const WALK_ROLE: u64 = 0x5741_4c4b;

/// Outcome of a successful insertion call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Insertion {
    /// Stored after `evictions` displacements.
    Stored { evictions: u32 },
    /// The walk limit was hit; the last displaced fingerprint went to the
    /// stash. Every key remains queryable but the shard accepts no more keys.
    Stashed,
    /// `insert_if_absent` found the key already reported as present.
    AlreadyPresent,
}

impl Insertion {
    pub fn is_failure(&self) -> bool {
        matches!(self, Insertion::Stashed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Deletion {
    Deleted,
    NotFound,
}

/// The one fingerprint left homeless by a failed walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StashEntry {
    pub fp: u64,
    pub location: Location,
}

/// Insertion counters and the walk-length histogram.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildStats {
    /// evictions -> number of stored inserts
    pub walk_histogram: BTreeMap<u32, u64>,
    pub inserts: u64,
    pub duplicates: u64,
    pub failures: u64,
    pub deletes: u64,
    pub occupied: u64,
    pub slots: u64,
}

/// Quantiles of the walk-length histogram.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WalkSummary {
    pub p50: u32,
    pub p99: u32,
    pub max: u32,
    pub zero_fraction: f64,
}

impl BuildStats {
    pub fn load_factor(&self) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            self.occupied as f64 / self.slots as f64
        }
    }

    pub fn histogram_mass(&self) -> u64 {
        self.walk_histogram.values().sum()
    }

    pub fn merge(&mut self, other: &BuildStats) {
        for (&w, &c) in &other.walk_histogram {
            *self.walk_histogram.entry(w).or_default() += c;
        }
        self.inserts += other.inserts;
        self.duplicates += other.duplicates;
        self.failures += other.failures;
        self.deletes += other.deletes;
        self.occupied += other.occupied;
        self.slots += other.slots;
    }

    fn quantile(&self, p: f64) -> u32 {
        let mass = self.histogram_mass();
        if mass == 0 {
            return 0;
        }
        let rank = ((p * mass as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for (&w, &c) in &self.walk_histogram {
            seen += c;
            if seen >= rank {
                return w;
            }
        }
        0
    }

    pub fn walk_summary(&self) -> WalkSummary {
        let mass = self.histogram_mass();
        WalkSummary {
            p50: self.quantile(0.5),
            p99: self.quantile(0.99),
            max: self.walk_histogram.keys().next_back().copied().unwrap_or(0),
            zero_fraction: if mass == 0 {
                0.0
            } else {
                self.walk_histogram.get(&0).copied().unwrap_or(0) as f64 / mass as f64
            },
        }
    }
}

/// One independent Cuckoo filter over a packed slot table.
#[derive(Clone, Debug)]
pub struct CuckooShard {
    layout: Layout,
    table: SlotTable,
    masks: Option<ProbeMasks>,
    prefix: [u64; 2],
    seed: u64,
    ordinal: usize,
    max_walk: u32,
    rng: Xoshiro256PlusPlus,
    stash: Option<StashEntry>,
    stats: BuildStats,
}

impl CuckooShard {
    pub fn new(layout: Layout, seed: u64, ordinal: usize, max_walk: u32) -> Self {
        let g = layout.geometry;
        let table = SlotTable::new(g.slots, g.q);
        Self::with_table(layout, table, seed, ordinal, max_walk)
    }

    fn with_table(layout: Layout, table: SlotTable, seed: u64, ordinal: usize, max_walk: u32) -> Self {
        let g = layout.geometry;
        let rng = Xoshiro256PlusPlus::seed_from_u64(derive_seed(seed, WALK_ROLE + ordinal as u64));
        CuckooShard {
            masks: g.probe_masks(),
            prefix: [g.choice_prefix(0), g.choice_prefix(1)],
            layout,
            table,
            seed,
            ordinal,
            max_walk,
            rng,
            stash: None,
            stats: BuildStats {
                slots: g.slots as u64,
                ..BuildStats::default()
            },
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.layout.geometry
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn table(&self) -> &SlotTable {
        &self.table
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ordinal(&self) -> usize {
        self.ordinal
    }

    pub fn max_walk(&self) -> u32 {
        self.max_walk
    }

    pub fn stash(&self) -> Option<StashEntry> {
        self.stash
    }

    /// Stored fingerprints, including a stashed one.
    pub fn len(&self) -> usize {
        self.table.occupied() + self.stash.is_some() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Occupied table slots over total slots.
    pub fn load_factor(&self) -> f64 {
        self.table.occupied() as f64 / self.table.len() as f64
    }

    pub fn stats(&self) -> BuildStats {
        BuildStats {
            occupied: self.len() as u64,
            ..self.stats.clone()
        }
    }

    #[inline]
    fn find_empty(&self, group: usize) -> Option<usize> {
        let start = self.layout.geometry.group_start(group);
        let l = self.layout.geometry.l;
        match &self.masks {
            Some(m) => find_empty_lane(self.table.load_group(start, l), m),
            None => self.table.scalar_probe(start, l, |_, v| v == 0),
        }
    }

    #[inline]
    fn find_match(&self, loc: Location, fp: u64) -> Option<usize> {
        let g = &self.layout.geometry;
        let start = g.group_start(loc.group);
        match &self.masks {
            Some(m) => {
                let pattern = self.prefix[loc.choice as usize] | m.broadcast(fp);
                find_match_lane(self.table.load_group(start, g.l), pattern, m)
            }
            None => self
                .table
                .scalar_probe(start, g.l, |j, v| v == g.encode(fp, loc.choice, j)),
        }
    }

    #[inline]
    fn try_place(&mut self, fp: u64, locs: &[Location; 2]) -> bool {
        for loc in locs {
            if let Some(lane) = self.find_empty(loc.group) {
                let g = &self.layout.geometry;
                let slot = g.group_start(loc.group) + lane;
                let v = g.encode(fp, loc.choice, lane);
                self.table.write_slot(slot, v);
                return true;
            }
        }
        false
    }

    #[inline]
    fn candidates(&self, x: u64) -> (u64, [Location; 2]) {
        let fp = self.layout.hashes.fingerprint(x);
        let first = self.layout.hashes.primary_group(x);
        (fp, self.layout.candidates(first, fp))
    }

    /// Inserts `x` without checking whether it is already present.
    pub fn insert(&mut self, x: u64) -> Result<Insertion, InsertError> {
        if self.stash.is_some() {
            self.stats.failures += 1;
            return Err(InsertError::Full);
        }
        let (fp, cands) = self.candidates(x);
        let outcome = self.place_with_walk(fp, cands);
        match outcome {
            Insertion::Stored { evictions } => {
                self.stats.inserts += 1;
                *self.stats.walk_histogram.entry(evictions).or_default() += 1;
            }
            Insertion::Stashed => self.stats.failures += 1,
            Insertion::AlreadyPresent => unreachable!(),
        }
        Ok(outcome)
    }

    fn place_with_walk(&mut self, fp: u64, cands: [Location; 2]) -> Insertion {
        let l = self.layout.geometry.l;
        let mut homeless = fp;
        let mut locs = cands;
        let mut evictions = 0u32;
        loop {
            if self.try_place(homeless, &locs) {
                return Insertion::Stored { evictions };
            }
            if evictions == self.max_walk {
                // locs[1] is where the homeless fingerprint was last stored
                // (or its alternative when nothing was evicted yet)
                self.stash = Some(StashEntry {
                    fp: homeless,
                    location: locs[1],
                });
                return Insertion::Stashed;
            }
            let r = self.rng.random_range(0..2 * l);
            let loc = locs[r / l];
            let lane = r % l;
            let g = self.layout.geometry;
            let slot = g.group_start(loc.group) + lane;
            let victim = self.table.write_slot(slot, g.encode(homeless, loc.choice, lane));
            evictions += 1;

            let fields = g.decode(victim);
            let here = g.group_of_slot(slot, &fields);
            let current = Location {
                group: here,
                choice: fields.choice,
            };
            homeless = fields.fp;
            locs = [self.layout.other_location(here, &fields), current];
        }
    }

    /// Inserts `x` unless it already queries as present.
    pub fn insert_if_absent(&mut self, x: u64) -> Result<Insertion, InsertError> {
        if self.contains(x) {
            self.stats.duplicates += 1;
            return Ok(Insertion::AlreadyPresent);
        }
        self.insert(x)
    }

    #[inline]
    pub fn contains(&self, x: u64) -> bool {
        let (fp, cands) = self.candidates(x);
        cands.iter().any(|&loc| self.find_match(loc, fp).is_some()) || self.stash_matches(fp, &cands)
    }

    fn stash_matches(&self, fp: u64, cands: &[Location; 2]) -> bool {
        match self.stash {
            None => false,
            Some(e) if e.fp != fp => false,
            Some(e) => match self.layout.geometry.variant {
                Variant::XorBucketed => cands.iter().any(|c| c.group == e.location.group),
                _ => cands.contains(&e.location),
            },
        }
    }

    /// Removes one stored copy of `x`. Deleting a key that was never inserted
    /// may remove another key's colliding fingerprint.
    pub fn delete(&mut self, x: u64) -> Deletion {
        let (fp, cands) = self.candidates(x);
        for loc in cands {
            if let Some(lane) = self.find_match(loc, fp) {
                let slot = self.layout.geometry.group_start(loc.group) + lane;
                self.table.write_slot(slot, 0);
                self.stats.deletes += 1;
                return Deletion::Deleted;
            }
        }
        if self.stash_matches(fp, &cands) {
            self.stash = None;
            self.stats.deletes += 1;
            return Deletion::Deleted;
        }
        Deletion::NotFound
    }

    /// Every stored fingerprint with its first-choice group, as a key would
    /// compute them. Under XOR addressing the smaller of the two buckets is used.
    pub fn stored_entries(&self) -> Vec<(u64, usize)> {
        let g = &self.layout.geometry;
        let mut out = Vec::with_capacity(self.len());
        let home = |group: usize, fields: &SlotFields| -> usize {
            match g.variant {
                Variant::XorBucketed => group.min(self.layout.xor_alternative(group, fields.fp)),
                _ if fields.choice == 0 => group,
                _ => self.layout.other_location(group, fields).group,
            }
        };
        for slot in 0..self.table.len() {
            let v = self.table.read_slot(slot);
            if v != 0 {
                let f = g.decode(v);
                out.push((f.fp, home(g.group_of_slot(slot, &f), &f)));
            }
        }
        if let Some(e) = self.stash {
            let f = SlotFields {
                fp: e.fp,
                choice: e.location.choice,
                lane: 0,
            };
            out.push((e.fp, home(e.location.group, &f)));
        }
        out
    }

    /// Full-scan consistency check of the packed table.
    pub fn check_invariants(&self) -> Result<(), String> {
        let g = &self.layout.geometry;
        let mut count = 0;
        for slot in 0..self.table.len() {
            let v = self.table.read_slot(slot);
            if v == 0 {
                continue;
            }
            count += 1;
            let f = g.decode(v);
            if f.fp == 0 {
                return Err(format!("slot {slot} holds a zero fingerprint"));
            }
            if g.variant == Variant::XorBucketed && f.choice != 0 {
                return Err(format!("slot {slot} has a choice bit under XOR addressing"));
            }
            if f.lane > slot {
                return Err(format!("slot {slot} lane {} precedes the table", f.lane));
            }
            let group = g.group_of_slot(slot, &f);
            if group >= g.groups {
                return Err(format!("slot {slot} belongs to group {group} >= {}", g.groups));
            }
            let other = self.layout.other_location(group, &f);
            if other.group >= g.groups {
                return Err(format!("slot {slot} alternative group {} out of range", other.group));
            }
        }
        if count != self.table.occupied() {
            return Err(format!(
                "occupancy counter {} disagrees with scan {count}",
                self.table.occupied()
            ));
        }
        Ok(())
    }

    /// Writes the shard header followed by the packed words.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<(), FormatError> {
        let g = &self.layout.geometry;
        let m = self.layout.hashes.multipliers();
        w.write_all(&SHARD_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[g.variant.code(), g.l as u8, g.k as u8, g.q as u8])?;
        w.write_all(&(g.slots as u64).to_le_bytes())?;
        w.write_all(&(g.groups as u64).to_le_bytes())?;
        w.write_all(&(g.shards as u32).to_le_bytes())?;
        w.write_all(&(self.ordinal as u32).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for a in [m.sub, m.loc, m.fp, m.off] {
            w.write_all(&a.to_le_bytes())?;
        }
        w.write_all(&self.max_walk.to_le_bytes())?;
        w.write_all(&(self.table.occupied() as u64).to_le_bytes())?;
        let (flag, choice, fp, group) = match self.stash {
            Some(e) => (1u8, e.location.choice, e.fp, e.location.group as u64),
            None => (0, 0, 0, 0),
        };
        w.write_all(&[flag, choice, 0, 0])?;
        w.write_all(&fp.to_le_bytes())?;
        w.write_all(&group.to_le_bytes())?;
        let words = self.table.words();
        w.write_all(&(words.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(words.len() * 8);
        for word in words {
            buf.extend_from_slice(&word.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads a shard written by [`CuckooShard::save`].
    pub fn load<R: Read>(r: &mut R) -> Result<Self, FormatError> {
        let magic: [u8; 4] = read_array(r)?;
        if magic != SHARD_MAGIC {
            return Err(FormatError::BadMagic(magic));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(FormatError::Version(version));
        }
        let [variant, l, k, q]: [u8; 4] = read_array(r)?;
        let slots = read_u64(r)? as usize;
        let groups = read_u64(r)? as usize;
        let shards = read_u32(r)? as usize;
        let ordinal = read_u32(r)? as usize;
        let seed = read_u64(r)?;
        let mult = Multipliers {
            sub: read_u64(r)?,
            loc: read_u64(r)?,
            fp: read_u64(r)?,
            off: read_u64(r)?,
        };
        let max_walk = read_u32(r)?;
        let occupied = read_u64(r)? as usize;
        let [flag, choice, _, _]: [u8; 4] = read_array(r)?;
        let stash_fp = read_u64(r)?;
        let stash_group = read_u64(r)? as usize;
        let word_count = read_u64(r)? as usize;

        let variant = Variant::from_code(variant)
            .ok_or_else(|| FormatError::Inconsistent(format!("unknown variant code {variant}")))?;
        let geometry = Geometry::new(variant, l as usize, k as u32, slots, shards)?;
        if geometry.q != q as u32 || geometry.groups != groups {
            return Err(FormatError::Inconsistent(format!(
                "stored q={q}, groups={groups} but geometry implies q={}, groups={}",
                geometry.q, geometry.groups
            )));
        }
        if ordinal >= shards {
            return Err(FormatError::Inconsistent(format!("ordinal {ordinal} >= shard count {shards}")));
        }
        if word_count != padded_words(slots, geometry.q) {
            return Err(FormatError::Inconsistent(format!(
                "{word_count} payload words for {slots} slots of {q} bits"
            )));
        }
        let layout = Layout::new(geometry, mult)?;

        let mut bytes = vec![0u8; word_count * 8];
        r.read_exact(&mut bytes)?;
        let words = bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let table = SlotTable::from_words(slots, geometry.q, words)
            .ok_or_else(|| FormatError::Inconsistent("payload length".into()))?;
        if table.occupied() != occupied {
            return Err(FormatError::Inconsistent(format!(
                "header occupancy {occupied} but payload holds {}",
                table.occupied()
            )));
        }
        let mut shard = CuckooShard::with_table(layout, table, seed, ordinal, max_walk);
        shard.stash = match flag {
            0 => None,
            1 => {
                if stash_fp == 0 || stash_fp >> geometry.fp_bits != 0 || stash_group >= groups || choice > 1 {
                    return Err(FormatError::Inconsistent("invalid stash entry".into()));
                }
                Some(StashEntry {
                    fp: stash_fp,
                    location: Location {
                        group: stash_group,
                        choice,
                    },
                })
            }
            other => return Err(FormatError::Inconsistent(format!("stash flag {other}"))),
        };
        shard.check_invariants().map_err(FormatError::Inconsistent)?;
        Ok(shard)
    }
}

pub(crate) fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N], FormatError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32, FormatError> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64, FormatError> {
    Ok(u64::from_le_bytes(read_array(r)?))
}
