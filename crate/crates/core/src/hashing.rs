//! Seeded multiplicative hash family.
//!
//! Every hash role uses a function of the form `x -> (a * x) mod b` where the
//! multiplication wraps modulo 2^64 and `a` is odd. The range reduction depends
//! on `b`:
//!
//! * `b` a power of two: keep the `log2 b` most significant bits of the
//!   `u`-bit product,
//! * `b` even but not a power of two: fold the upper half of the product into
//!   the lower half with XOR before reducing,
//! * `b` odd: reduce directly.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::error::ConfigError;

/// Bit width of keys accepted by the filters.
pub const KEY_BITS: u32 = 64;

/// Hashes `x` into `[0, b)` with multiplier `a`, treating keys as `u`-bit
/// integers.
///
/// `b` must be non-zero; the caller guarantees `a` is odd.
#[inline]
pub fn linear_hash(x: u64, a: u64, b: u64, u: u32) -> u64 {
    debug_assert!(b >= 1);
    debug_assert!(a & 1 == 1);
    debug_assert!((1..=64).contains(&u));
    let p = a.wrapping_mul(x);
    if b.is_power_of_two() {
        if b == 1 {
            return 0;
        }
        let shift = u.saturating_sub(b.trailing_zeros());
        (p >> shift) & (b - 1)
    } else if b & 1 == 0 {
        (p ^ (p >> (u / 2))) % b
    } else {
        p % b
    }
}

/// Derives an independent seed for one randomness role from the user seed.
pub fn derive_seed(seed: u64, role: u64) -> u64 {
    SplitMix64::seed_from_u64(seed ^ role.wrapping_mul(0x9E37_79B9_7F4A_7C15)).next_u64()
}

/// The four multipliers of a hash family, in role order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Multipliers {
    pub sub: u64,
    pub loc: u64,
    pub fp: u64,
    pub off: u64,
}

impl Multipliers {
    /// Draws four odd multipliers from a SplitMix64 stream seeded with `seed`.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let mut next = || rng.next_u64() | 1;
        Multipliers {
            sub: next(),
            loc: next(),
            fp: next(),
            off: next(),
        }
    }

    pub fn all_odd(&self) -> bool {
        [self.sub, self.loc, self.fp, self.off].iter().all(|a| a & 1 == 1)
    }
}

/// Hash functions for routing, addressing, fingerprinting and offsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashFamily {
    key_bits: u32,
    mult: Multipliers,
    range_sub: u64,
    range_loc: u64,
    fp_bits: u32,
    range_off: u64,
}

impl HashFamily {
    /// Builds a family for `shards` subfilters of `groups` locations each.
    ///
    /// `offset_range` is the range of the offset hash before any shift: `groups - 1`
    /// for offset addressing and `groups` for XOR addressing.
    pub fn new(
        mult: Multipliers,
        shards: u64,
        groups: u64,
        fp_bits: u32,
        offset_range: u64,
    ) -> Result<Self, ConfigError> {
        if !mult.all_odd() {
            return Err(ConfigError::EvenMultiplier);
        }
        if shards == 0 || offset_range == 0 {
            return Err(ConfigError::EmptyHashRange);
        }
        if groups < 2 {
            return Err(ConfigError::TooFewGroups(groups));
        }
        if !(1..=63).contains(&fp_bits) {
            return Err(ConfigError::FingerprintBits(fp_bits));
        }
        Ok(HashFamily {
            key_bits: KEY_BITS,
            mult,
            range_sub: shards,
            range_loc: groups,
            fp_bits,
            range_off: offset_range,
        })
    }

    pub fn multipliers(&self) -> Multipliers {
        self.mult
    }

    pub fn fp_bits(&self) -> u32 {
        self.fp_bits
    }

    #[inline]
    pub fn subfilter_of(&self, x: u64) -> usize {
        linear_hash(x, self.mult.sub, self.range_sub, self.key_bits) as usize
    }

    /// First candidate group of `x` within its subfilter.
    #[inline]
    pub fn primary_group(&self, x: u64) -> usize {
        linear_hash(x, self.mult.loc, self.range_loc, self.key_bits) as usize
    }

    /// Non-zero fingerprint of `x`; zero is reserved for empty slots.
    #[inline]
    pub fn fingerprint(&self, x: u64) -> u64 {
        let range = (1u64 << self.fp_bits) - 1;
        linear_hash(x, self.mult.fp, range, self.key_bits) + 1
    }

    /// Offset in `[1, L-1]` between the two groups of a fingerprint.
    #[inline]
    pub fn offset_for(&self, fp: u64) -> usize {
        1 + linear_hash(fp, self.mult.off, self.range_off, self.fp_bits) as usize
    }

    /// Bucket hash for XOR addressing, in `[0, B)`.
    #[inline]
    pub fn xor_hash(&self, fp: u64) -> usize {
        linear_hash(fp, self.mult.off, self.range_off, self.fp_bits) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

    #[test]
    fn zero_and_unit_range() {
        for b in [1u64, 2, 3, 6, 16, 1000] {
            assert_eq!(linear_hash(0, GOLDEN, b, 64), 0);
        }
        for x in [1u64, 7, u64::MAX] {
            assert_eq!(linear_hash(x, GOLDEN, 1, 64), 0);
        }
    }

    #[test]
    fn power_of_two_takes_top_bits() {
        assert_eq!(linear_hash(1, GOLDEN, 16, 64), 9);
    }

    #[test]
    fn even_and_odd_ranges() {
        // reference values computed with arbitrary-precision integers
        assert_eq!(linear_hash(7, GOLDEN, 12, 64), 9);
        assert_eq!(linear_hash(7, GOLDEN, 1023, 64), 33);
        assert_eq!(linear_hash(5, 3, 6, 64), 3);
    }

    #[test]
    fn splitmix_multipliers_match_reference() {
        let m = Multipliers::from_seed(42);
        assert_eq!(m.sub, 0xbdd732262feb6e95);
        assert_eq!(m.loc, 0x28efe333b266f103);
        assert_eq!(m.fp, 0x47526757130f9f53);
        assert_eq!(m.off, 0x581ce1ff0e4ae395);
    }

    #[test]
    fn rejects_bad_families() {
        let mut m = Multipliers::from_seed(1);
        assert!(HashFamily::new(m, 1, 1, 10, 1).is_err());
        assert!(HashFamily::new(m, 0, 8, 10, 7).is_err());
        m.fp = 4;
        assert!(HashFamily::new(m, 1, 8, 10, 7).is_err());
    }

    #[test]
    fn fingerprint_is_never_zero() {
        let h = HashFamily::new(Multipliers::from_seed(3), 1, 100, 3, 99).unwrap();
        assert_eq!(h.fingerprint(0), 1);
        let mut seen = [false; 8];
        for x in 0..100_000u64 {
            let fp = h.fingerprint(x.wrapping_mul(0x2545F4914F6CDD1D));
            assert!((1..=7).contains(&fp));
            seen[fp as usize] = true;
        }
        assert!(!seen[0] && seen[1..].iter().all(|&s| s));
    }

    #[test]
    fn offsets_are_nonzero_and_in_range() {
        let h = HashFamily::new(Multipliers::from_seed(9), 1, 2, 10, 1).unwrap();
        for fp in 1..1024 {
            assert_eq!(h.offset_for(fp), 1);
        }
        let h = HashFamily::new(Multipliers::from_seed(9), 1, 8, 10, 7).unwrap();
        for fp in 1..1024 {
            let o = h.offset_for(fp);
            assert!((1..8).contains(&o));
            assert_eq!(o, 1 + linear_hash(fp, h.multipliers().off, 7, 10) as usize);
            assert_eq!(o, h.offset_for(fp));
        }
    }

    #[test]
    fn single_subfilter_routes_to_zero() {
        let h = HashFamily::new(Multipliers::from_seed(5), 1, 10, 8, 9).unwrap();
        for x in [0u64, 1, 99, u64::MAX] {
            assert_eq!(h.subfilter_of(x), 0);
        }
    }
}
