//! Bit-packed slot storage and bit-parallel group probes.

/// Words per 64-byte cache line.
const LINE_WORDS: usize = 8;

/// `s` slots of `q` bits each, packed little-endian into 64-bit words.
///
/// Slot `i` occupies bits `[i*q, (i+1)*q)` of the packed stream. A zero slot is
/// empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotTable {
    q: u32,
    slots: usize,
    mask: u64,
    words: Vec<u64>,
    occupied: usize,
}

/// Number of words backing `slots` slots of `q` bits, padded to whole cache lines.
pub fn padded_words(slots: usize, q: u32) -> usize {
    let bits = slots * q as usize;
    let words = bits.div_ceil(64);
    words.div_ceil(LINE_WORDS).max(1) * LINE_WORDS
}

#[inline]
fn low_mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

impl SlotTable {
    pub fn new(slots: usize, q: u32) -> Self {
        assert!((1..=57).contains(&q), "slot width {q} unsupported");
        SlotTable {
            q,
            slots,
            mask: low_mask(q),
            words: vec![0; padded_words(slots, q)],
            occupied: 0,
        }
    }

    /// Rebuilds a table from persisted words, recounting occupancy.
    pub fn from_words(slots: usize, q: u32, words: Vec<u64>) -> Option<Self> {
        if words.len() != padded_words(slots, q) {
            return None;
        }
        let mut t = SlotTable {
            q,
            slots,
            mask: low_mask(q),
            words,
            occupied: 0,
        };
        t.occupied = t.count_nonzero();
        Some(t)
    }

    pub fn slot_bits(&self) -> u32 {
        self.q
    }

    pub fn len(&self) -> usize {
        self.slots
    }

    pub fn is_empty(&self) -> bool {
        self.slots == 0
    }

    pub fn occupied(&self) -> usize {
        self.occupied
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn memory_bytes(&self) -> usize {
        self.words.len() * 8
    }

    /// Full scan; the occupancy counter must always agree with it.
    pub fn count_nonzero(&self) -> usize {
        (0..self.slots).filter(|&i| self.read_slot(i) != 0).count()
    }

    #[inline]
    fn read_bits(&self, bit: usize, width: u32) -> u64 {
        let w = bit / 64;
        let off = (bit % 64) as u32;
        let mut v = self.words[w] >> off;
        if off + width > 64 {
            v |= self.words[w + 1] << (64 - off);
        }
        v & low_mask(width)
    }

    #[inline]
    pub fn read_slot(&self, i: usize) -> u64 {
        assert!(i < self.slots, "slot {i} out of range {}", self.slots);
        self.read_bits(i * self.q as usize, self.q)
    }

    /// Stores `v` in slot `i` and returns the previous value.
    #[inline]
    pub fn write_slot(&mut self, i: usize, v: u64) -> u64 {
        assert!(i < self.slots, "slot {i} out of range {}", self.slots);
        debug_assert!(v <= self.mask);
        let bit = i * self.q as usize;
        let w = bit / 64;
        let off = (bit % 64) as u32;
        let old = self.read_bits(bit, self.q);

        self.words[w] = (self.words[w] & !(self.mask << off)) | (v << off);
        if off + self.q > 64 {
            let spill = off + self.q - 64;
            let hi_mask = low_mask(spill);
            self.words[w + 1] = (self.words[w + 1] & !hi_mask) | (v >> (64 - off));
        }

        match (old == 0, v == 0) {
            (true, false) => self.occupied += 1,
            (false, true) => self.occupied -= 1,
            _ => {}
        }
        old
    }

    /// Loads `l` consecutive slots starting at `start` into one integer, lane `j`
    /// holding slot `start + j`. Requires `l * q <= 64`.
    #[inline]
    pub fn load_group(&self, start: usize, l: usize) -> u64 {
        let width = l as u32 * self.q;
        assert!(width <= 64);
        assert!(start + l <= self.slots);
        self.read_bits(start * self.q as usize, width)
    }

    /// Reference probe: first lane `j < l` whose slot satisfies `pred(j, value)`.
    pub fn scalar_probe(
        &self,
        start: usize,
        l: usize,
        mut pred: impl FnMut(usize, u64) -> bool,
    ) -> Option<usize> {
        (0..l).find(|&j| pred(j, self.read_slot(start + j)))
    }
}

/// Precomputed lane masks for probing `l` lanes of `q` bits held in one word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProbeMasks {
    pub q: u32,
    pub l: usize,
    /// Lowest bit of every lane.
    pub lo: u64,
    /// Highest bit of every lane.
    pub hi: u64,
}

impl ProbeMasks {
    /// `None` when the lanes do not fit in 64 bits.
    pub fn new(q: u32, l: usize) -> Option<Self> {
        if l == 0 || q == 0 || l as u32 * q > 64 {
            return None;
        }
        let lo = (0..l).fold(0u64, |acc, j| acc | 1u64 << (j as u32 * q));
        Some(ProbeMasks {
            q,
            l,
            lo,
            hi: lo << (q - 1),
        })
    }

    /// Replicates a lane value into every lane.
    #[inline]
    pub fn broadcast(&self, v: u64) -> u64 {
        v.wrapping_mul(self.lo)
    }
}

/// Lowest lane of `image` that is zero.
///
/// Borrows in `image - lo` can only flag lanes above a genuinely empty one, so
/// the lowest set bit of the mask is exact.
#[inline]
pub fn find_empty_lane(image: u64, masks: &ProbeMasks) -> Option<usize> {
    let e = image.wrapping_sub(masks.lo) & !image & masks.hi;
    if e == 0 {
        None
    } else {
        Some(e.trailing_zeros() as usize / masks.q as usize)
    }
}

/// Lowest lane of `image` equal to the corresponding lane of `pattern`.
#[inline]
pub fn find_match_lane(image: u64, pattern: u64, masks: &ProbeMasks) -> Option<usize> {
    find_empty_lane(image ^ pattern, masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    #[test]
    fn fresh_table_is_empty() {
        let t = SlotTable::new(1000, 13);
        assert!((0..1000).all(|i| t.read_slot(i) == 0));
        assert_eq!(t.occupied(), 0);
        assert_eq!(t.words().len() % 8, 0);
    }

    #[test]
    fn write_read_and_occupancy() {
        let mut t = SlotTable::new(100, 12);
        assert_eq!(t.write_slot(5, 0), 0);
        assert_eq!(t.occupied(), 0);
        assert_eq!(t.write_slot(5, 0xABC), 0);
        assert_eq!(t.occupied(), 1);
        assert_eq!(t.read_slot(5), 0xABC);
        assert_eq!(t.read_slot(4), 0);
        assert_eq!(t.read_slot(6), 0);
        assert_eq!(t.write_slot(5, 0x123), 0xABC);
        assert_eq!(t.occupied(), 1);
        assert_eq!(t.write_slot(5, 0), 0x123);
        assert_eq!(t.occupied(), 0);
    }

    #[test]
    fn straddling_slots_are_isolated() {
        // q = 13: slot 4 spans bits 52..65
        let mut t = SlotTable::new(20, 13);
        t.write_slot(4, 0x1FFF);
        assert_eq!(t.read_slot(3), 0);
        assert_eq!(t.read_slot(5), 0);
        assert_eq!(t.read_slot(4), 0x1FFF);
        t.write_slot(3, 0x1555);
        t.write_slot(5, 0x0AAA);
        t.write_slot(4, 0);
        assert_eq!(t.read_slot(3), 0x1555);
        assert_eq!(t.read_slot(5), 0x0AAA);
    }

    #[test]
    #[should_panic]
    fn out_of_range_read_panics() {
        SlotTable::new(10, 8).read_slot(10);
    }

    #[test]
    fn packed_fuzz_matches_shadow_array() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
        for q in [7u32, 8, 11, 13, 16, 17, 23, 32] {
            let s = 3001;
            let mut t = SlotTable::new(s, q);
            let mut shadow = vec![0u64; s];
            for _ in 0..200_000 {
                let i = rng.random_range(0..s);
                let v = if rng.random_bool(0.3) { 0 } else { rng.random::<u64>() & low_mask(q) };
                assert_eq!(t.write_slot(i, v), shadow[i]);
                shadow[i] = v;
            }
            for (i, &v) in shadow.iter().enumerate() {
                assert_eq!(t.read_slot(i), v);
            }
            assert_eq!(t.occupied(), t.count_nonzero());
            assert_eq!(t.occupied(), shadow.iter().filter(|&&v| v != 0).count());
        }
    }

    #[test]
    fn load_group_concatenates_slots() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        for (q, l) in [(8u32, 4usize), (13, 4), (16, 4), (12, 2), (31, 2), (32, 2)] {
            let s = 500;
            let mut t = SlotTable::new(s, q);
            for i in 0..s {
                t.write_slot(i, rng.random::<u64>() & low_mask(q));
            }
            for start in 0..=s - l {
                let expect = (0..l).fold(0u64, |acc, j| acc | t.read_slot(start + j) << (j as u32 * q));
                assert_eq!(t.load_group(start, l), expect, "q={q} l={l} start={start}");
            }
        }
    }

    #[test]
    fn masks_layout() {
        let m = ProbeMasks::new(8, 4).unwrap();
        assert_eq!(m.lo, 0x0101_0101);
        assert_eq!(m.hi, 0x8080_8080);
        assert!(ProbeMasks::new(17, 4).is_none());
        let m = ProbeMasks::new(16, 4).unwrap();
        assert_eq!(m.hi, 0x8000_8000_8000_8000);
    }

    #[test]
    fn empty_probe_worked_example() {
        // slots 3..0 = 10001111 | 00000000 | 11100110 | 00000000
        let mut t = SlotTable::new(4, 8);
        t.write_slot(1, 0b1110_0110);
        t.write_slot(3, 0b1000_1111);
        let x = t.load_group(0, 4);
        assert_eq!(x, 0b10001111_00000000_11100110_00000000);
        let m = ProbeMasks::new(8, 4).unwrap();
        let e = x.wrapping_sub(m.lo) & !x & m.hi;
        assert_eq!(e, 0b00000000_10000000_00000000_10000000);
        assert_eq!(e.trailing_zeros(), 7);
        assert_eq!(find_empty_lane(x, &m), Some(0));
        assert_eq!(find_empty_lane(0xFFFF_FFFF, &m), None);
    }

    #[test]
    fn match_probe_worked_example() {
        let y = 0b10011100_10111100_11011100_11111100u64;
        let x = 0b10001111_00000000_11011100_00000000u64;
        let m = ProbeMasks::new(8, 4).unwrap();
        assert_eq!(x ^ y, 0b00010011_10111100_00000000_11111100);
        assert_eq!(find_match_lane(x, y, &m), Some(1));
        assert_eq!(find_match_lane(0, y, &m), None);
    }

    #[test]
    fn scalar_probe_on_empty_table() {
        let t = SlotTable::new(16, 10);
        assert_eq!(t.scalar_probe(4, 4, |_, v| v == 0), Some(0));
        assert_eq!(t.scalar_probe(4, 4, |_, v| v == 0x155), None);
    }
}
