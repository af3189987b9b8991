//! Slot geometry and addressing for the three filter layouts.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::hashing::{HashFamily, Multipliers};
use crate::table::ProbeMasks;

/// Asymptotic load thresholds of 2-ary Cuckoo hashing, for group sizes 1 to 4.
pub const BUCKET_THRESHOLDS: [f64; 4] = [0.5, 0.8970, 0.9591, 0.9803];
pub const WINDOW_THRESHOLDS: [f64; 4] = [0.5, 0.9649, 0.9944, 0.9989];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Power-of-two buckets, alternative bucket by XOR with a fingerprint hash.
    #[serde(rename = "xor", alias = "xor_bucketed")]
    XorBucketed,
    /// Disjoint buckets, alternative bucket by a signed offset plus choice bit.
    #[serde(rename = "bucketed", alias = "offset_bucketed")]
    OffsetBucketed,
    /// Overlapping windows, signed offset plus choice and window-offset bits.
    #[serde(rename = "windowed", alias = "offset_windowed")]
    OffsetWindowed,
}

impl Variant {
    pub const ALL: [Variant; 3] = [
        Variant::XorBucketed,
        Variant::OffsetBucketed,
        Variant::OffsetWindowed,
    ];

    pub fn is_windowed(self) -> bool {
        self == Variant::OffsetWindowed
    }

    pub fn code(self) -> u8 {
        match self {
            Variant::XorBucketed => 0,
            Variant::OffsetBucketed => 1,
            Variant::OffsetWindowed => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::XorBucketed => "xor",
            Variant::OffsetBucketed => "bucketed",
            Variant::OffsetWindowed => "windowed",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xor" | "xor_bucketed" => Ok(Variant::XorBucketed),
            "bucketed" | "offset_bucketed" => Ok(Variant::OffsetBucketed),
            "windowed" | "offset_windowed" => Ok(Variant::OffsetWindowed),
            other => Err(format!("unknown variant `{other}` (expected xor, bucketed or windowed)")),
        }
    }
}

/// Theoretical load threshold for the variant's layout and group size.
pub fn load_threshold(variant: Variant, l: usize) -> f64 {
    let table = if variant.is_windowed() {
        &WINDOW_THRESHOLDS
    } else {
        &BUCKET_THRESHOLDS
    };
    table[l - 1]
}

/// Per-subfilter geometry shared by all subfilters of a filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub variant: Variant,
    /// Slots per bucket or window.
    pub l: usize,
    /// Target false positive rate is `2^-k`.
    pub k: u32,
    /// Slot width in bits.
    pub q: u32,
    pub fp_bits: u32,
    /// Slots per subfilter.
    pub slots: usize,
    /// Buckets or windows per subfilter.
    pub groups: usize,
    pub shards: usize,
}

impl Geometry {
    /// Geometry with an explicit per-subfilter slot count.
    pub fn new(
        variant: Variant,
        l: usize,
        k: u32,
        slots: usize,
        shards: usize,
    ) -> Result<Self, ConfigError> {
        if l != 2 && l != 4 {
            return Err(ConfigError::GroupSize(l));
        }
        if !(3..=30).contains(&k) {
            return Err(ConfigError::FingerprintK(k));
        }
        if shards == 0 {
            return Err(ConfigError::ZeroShards);
        }
        let lane_bits = l.trailing_zeros();
        let q = k + 1 + lane_bits;
        if q > 32 {
            return Err(ConfigError::SlotWidth(q));
        }
        let fp_bits = match variant {
            Variant::XorBucketed => q,
            Variant::OffsetBucketed => k + lane_bits,
            Variant::OffsetWindowed => k,
        };
        let groups = match variant {
            Variant::OffsetWindowed => slots.saturating_sub(l - 1),
            _ => {
                if !slots.is_multiple_of(l) {
                    return Err(ConfigError::TooFewSlots { slots, l });
                }
                slots / l
            }
        };
        if groups < 2 {
            return Err(ConfigError::TooFewGroups(groups as u64));
        }
        if variant == Variant::XorBucketed && !groups.is_power_of_two() {
            return Err(ConfigError::NotPowerOfTwo(groups));
        }
        Ok(Geometry {
            variant,
            l,
            k,
            q,
            fp_bits,
            slots,
            groups,
            shards,
        })
    }

    pub fn total_slots(&self) -> usize {
        self.slots * self.shards
    }

    pub fn total_bits(&self) -> usize {
        self.total_slots() * self.q as usize
    }

    /// Overhead factor `s*q / (n*k)` for `n` stored keys.
    pub fn overhead(&self, n: usize) -> f64 {
        self.total_bits() as f64 / (n as f64 * self.k as f64)
    }

    pub fn threshold(&self) -> f64 {
        load_threshold(self.variant, self.l)
    }

    /// First slot of a bucket or window.
    #[inline]
    pub fn group_start(&self, group: usize) -> usize {
        if self.variant.is_windowed() {
            group
        } else {
            group * self.l
        }
    }

    #[inline]
    pub fn slots_of(&self, group: usize) -> Range<usize> {
        let start = self.group_start(group);
        start..start + self.l
    }

    /// Packs a fingerprint with its choice bit and, for windows, the offset of
    /// lane `lane` within the window. Bits from most to least significant:
    /// choice, window offset, fingerprint.
    ///
    /// Window offsets count down: lane `j` stores `l - 1 - j`.
    #[inline]
    pub fn encode(&self, fp: u64, choice: u8, lane: usize) -> u64 {
        debug_assert!(fp != 0 && fp >> self.fp_bits == 0);
        match self.variant {
            Variant::XorBucketed => fp,
            Variant::OffsetBucketed => (choice as u64) << (self.q - 1) | fp,
            Variant::OffsetWindowed => {
                (choice as u64) << (self.q - 1) | ((self.l - 1 - lane) as u64) << self.fp_bits | fp
            }
        }
    }

    /// Inverse of [`Geometry::encode`] for a non-empty slot.
    #[inline]
    pub fn decode(&self, v: u64) -> SlotFields {
        let fp = v & ((1u64 << self.fp_bits) - 1);
        match self.variant {
            Variant::XorBucketed => SlotFields { fp, choice: 0, lane: 0 },
            Variant::OffsetBucketed => SlotFields {
                fp,
                choice: (v >> (self.q - 1)) as u8,
                lane: 0,
            },
            Variant::OffsetWindowed => {
                let off_mask = (self.l - 1) as u64;
                let off = ((v >> self.fp_bits) & off_mask) as usize;
                SlotFields {
                    fp,
                    choice: (v >> (self.q - 1)) as u8,
                    lane: self.l - 1 - off,
                }
            }
        }
    }

    /// Group a stored value at slot `slot` currently belongs to.
    #[inline]
    pub fn group_of_slot(&self, slot: usize, fields: &SlotFields) -> usize {
        if self.variant.is_windowed() {
            slot - fields.lane
        } else {
            slot / self.l
        }
    }

    /// Bit-parallel masks when a whole group fits in one word.
    pub fn probe_masks(&self) -> Option<ProbeMasks> {
        ProbeMasks::new(self.q, self.l)
    }

    /// Non-fingerprint bits of every lane for a given choice, packed like a
    /// group image.
    pub fn choice_prefix(&self, choice: u8) -> u64 {
        if self.l as u32 * self.q > 64 {
            return 0;
        }
        let fp_mask = (1u64 << self.fp_bits) - 1;
        (0..self.l).fold(0u64, |acc, j| {
            let lane = self.encode(1, choice, j) & !fp_mask;
            acc | lane << (j as u32 * self.q)
        })
    }
}

/// Decoded contents of an occupied slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotFields {
    pub fp: u64,
    pub choice: u8,
    pub lane: usize,
}

/// Result of sizing a filter for a target capacity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sizing {
    pub geometry: Geometry,
    /// Total slots needed to hold the keys at the target load.
    pub required_slots: usize,
    /// Total slots before any power-of-two rounding.
    pub unrounded_slots: usize,
    /// Predicted overhead factor at full capacity.
    pub predicted_overhead: f64,
}

impl Sizing {
    /// True when XOR addressing forced the bucket count up to a power of two.
    pub fn rounded_up(&self) -> bool {
        self.geometry.total_slots() > self.unrounded_slots
    }
}

/// Chooses the slot count so `n` keys fill the filter to `load_fraction` of the
/// layout's load threshold.
pub fn size_filter(
    n: usize,
    load_fraction: f64,
    variant: Variant,
    l: usize,
    k: u32,
    shards: usize,
) -> Result<Sizing, ConfigError> {
    if !(load_fraction > 0.0 && load_fraction <= 1.0) {
        return Err(ConfigError::LoadFraction(load_fraction));
    }
    if l != 2 && l != 4 {
        return Err(ConfigError::GroupSize(l));
    }
    size_for_load(n, load_fraction * load_threshold(variant, l), variant, l, k, shards)
}

/// Chooses the slot count so `n` keys fill the filter to the absolute load
/// `load`. Buckets and windows with the same `l` get identical slot counts.
pub fn size_for_load(
    n: usize,
    load: f64,
    variant: Variant,
    l: usize,
    k: u32,
    shards: usize,
) -> Result<Sizing, ConfigError> {
    if n == 0 {
        return Err(ConfigError::ZeroCapacity);
    }
    if !(load > 0.0 && load <= 1.0) {
        return Err(ConfigError::LoadFraction(load));
    }
    if l != 2 && l != 4 {
        return Err(ConfigError::GroupSize(l));
    }
    if shards == 0 {
        return Err(ConfigError::ZeroShards);
    }
    let required = (n as f64 / load).ceil() as usize;
    let buckets = required.div_ceil(l).div_ceil(shards).max(2);
    let unrounded_slots = buckets * l * shards;
    let buckets = if variant == Variant::XorBucketed {
        buckets.next_power_of_two()
    } else {
        buckets
    };
    let geometry = Geometry::new(variant, l, k, buckets * l, shards)?;
    Ok(Sizing {
        geometry,
        required_slots: required,
        unrounded_slots,
        predicted_overhead: geometry.overhead(n),
    })
}

/// A candidate group and whether it is the first (0) or alternative (1) one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Location {
    pub group: usize,
    pub choice: u8,
}

/// Geometry plus hash functions: everything needed to address a key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub geometry: Geometry,
    pub hashes: HashFamily,
}

impl Layout {
    pub fn new(geometry: Geometry, mult: Multipliers) -> Result<Self, ConfigError> {
        let g = geometry.groups as u64;
        let offset_range = match geometry.variant {
            Variant::XorBucketed => g,
            _ => g - 1,
        };
        let hashes = HashFamily::new(mult, geometry.shards as u64, g, geometry.fp_bits, offset_range)?;
        Ok(Layout { geometry, hashes })
    }

    #[inline]
    pub fn primary_location(&self, x: u64) -> Location {
        Location {
            group: self.hashes.primary_group(x),
            choice: 0,
        }
    }

    /// The other group of a fingerprint stored at `loc` (offset variants).
    #[inline]
    pub fn alternative_location(&self, loc: Location, fp: u64) -> Location {
        let groups = self.geometry.groups;
        let off = self.hashes.offset_for(fp);
        if loc.choice == 0 {
            Location {
                group: (loc.group + off) % groups,
                choice: 1,
            }
        } else {
            Location {
                group: (loc.group + groups - off) % groups,
                choice: 0,
            }
        }
    }

    /// The other bucket of a fingerprint under XOR addressing.
    #[inline]
    pub fn xor_alternative(&self, bucket: usize, fp: u64) -> usize {
        bucket ^ self.hashes.xor_hash(fp)
    }

    /// Both candidate locations of a fingerprint whose first group is `first`.
    #[inline]
    pub fn candidates(&self, first: usize, fp: u64) -> [Location; 2] {
        let a = Location { group: first, choice: 0 };
        let b = match self.geometry.variant {
            Variant::XorBucketed => Location {
                group: self.xor_alternative(first, fp),
                choice: 0,
            },
            _ => self.alternative_location(a, fp),
        };
        [a, b]
    }

    /// The other location of a value currently stored in group `group`.
    #[inline]
    pub fn other_location(&self, group: usize, fields: &SlotFields) -> Location {
        match self.geometry.variant {
            Variant::XorBucketed => Location {
                group: self.xor_alternative(group, fields.fp),
                choice: 0,
            },
            _ => self.alternative_location(
                Location {
                    group,
                    choice: fields.choice,
                },
                fields.fp,
            ),
        }
    }
}
