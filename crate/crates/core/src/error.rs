use std::io;

use thiserror::Error;

/// Rejected filter parameters.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("capacity must be positive")]
    ZeroCapacity,
    #[error("load fraction {0} outside (0, 1]")]
    LoadFraction(f64),
    #[error("group size {0} not supported (expected 2 or 4)")]
    GroupSize(usize),
    #[error("k = {0} outside [3, 30]")]
    FingerprintK(u32),
    #[error("slot width {0} bits exceeds 32")]
    SlotWidth(u32),
    #[error("fingerprint width {0} bits outside [1, 63]")]
    FingerprintBits(u32),
    #[error("at least two groups per subfilter are required, got {0}")]
    TooFewGroups(u64),
    #[error("subfilter count must be positive")]
    ZeroShards,
    #[error("hash range must be non-empty")]
    EmptyHashRange,
    #[error("hash multipliers must be odd")]
    EvenMultiplier,
    #[error("XOR addressing needs a power-of-two bucket count, got {0}")]
    NotPowerOfTwo(usize),
    #[error("slot count {slots} too small for groups of {l}")]
    TooFewSlots { slots: usize, l: usize },
}

/// Insertion failure that left the filter unchanged.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum InsertError {
    #[error("filter is full: random walk failed and the stash is occupied")]
    Full,
}

/// Errors reading or writing the binary filter format.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("truncated payload")]
    Truncated,
    #[error("inconsistent header: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for FormatError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            FormatError::Truncated
        } else {
            FormatError::Io(e)
        }
    }
}
