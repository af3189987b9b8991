use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::filter::DEFAULT_MAX_WALK;
use crate::hashing::Multipliers;
use crate::layout::{size_filter, Geometry, Layout, Sizing, Variant};

/// User-facing filter parameters; geometry is derived by [`FilterConfig::sizing`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub variant: Variant,
    pub l: usize,
    pub k: u32,
    pub capacity: usize,
    /// Fraction of the theoretical load threshold to fill to.
    pub load_fraction: f64,
    pub max_walk: u32,
    pub shards: usize,
    pub seed: u64,
}

impl FilterConfig {
    pub fn new(variant: Variant, l: usize, k: u32, capacity: usize) -> Self {
        FilterConfig {
            variant,
            l,
            k,
            capacity,
            load_fraction: 0.98,
            max_walk: DEFAULT_MAX_WALK,
            shards: 1,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_shards(mut self, shards: usize) -> Self {
        self.shards = shards;
        self
    }

    pub fn with_load_fraction(mut self, load_fraction: f64) -> Self {
        self.load_fraction = load_fraction;
        self
    }

    pub fn with_max_walk(mut self, max_walk: u32) -> Self {
        self.max_walk = max_walk;
        self
    }

    pub fn sizing(&self) -> Result<Sizing, ConfigError> {
        size_filter(
            self.capacity,
            self.load_fraction,
            self.variant,
            self.l,
            self.k,
            self.shards,
        )
    }

    pub fn geometry(&self) -> Result<Geometry, ConfigError> {
        Ok(self.sizing()?.geometry)
    }

    pub fn multipliers(&self) -> Multipliers {
        Multipliers::from_seed(self.seed)
    }

    pub fn layout(&self) -> Result<Layout, ConfigError> {
        Layout::new(self.geometry()?, self.multipliers())
    }
}
