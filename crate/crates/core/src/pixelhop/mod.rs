//! Multi-level, channel-wise PixelHop++ models.
//!
//! Level 1 fits one Saab unit on `m × m × C₀` windows of the input images.
//! Every channel is then classified by its global energy ratio: below
//! `energy_cutoff` it is discarded, above `energy_forward` it becomes an
//! intermediate channel that is max-pooled and fed to its own single-channel
//! unit at the next level, and anything in between is kept as a leaf. Leaf
//! channels of every level make up the feature vector.

mod report;
mod tree;
mod window;

pub use report::{describe, LevelSummary, ModelReport};
pub use tree::{
    fit_hoptree, level_shapes, transform, transform_batch, ChannelNode, ChannelRef, HopTree,
    LayoutEntry, LevelShape, Unit,
};
pub use window::{extract_patches, max_pool};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How a leaf channel's response map is reduced into feature values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Every response, row-major.
    #[default]
    Flatten,
    SpatialMax,
    SpatialMean,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Flatten => "flatten",
            Aggregation::SpatialMax => "spatial_max",
            Aggregation::SpatialMean => "spatial_mean",
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            Aggregation::Flatten => 0,
            Aggregation::SpatialMax => 1,
            Aggregation::SpatialMean => 2,
        }
    }

    pub(crate) fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(Aggregation::Flatten),
            1 => Some(Aggregation::SpatialMax),
            2 => Some(Aggregation::SpatialMean),
            _ => None,
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flatten" => Ok(Aggregation::Flatten),
            "spatial_max" => Ok(Aggregation::SpatialMax),
            "spatial_mean" => Ok(Aggregation::SpatialMean),
            other => Err(Error::Config(format!("unknown aggregation `{other}`"))),
        }
    }
}

/// Architecture and pruning thresholds of a PixelHop++ model.
#[derive(Debug, Clone, PartialEq)]
pub struct HopConfig {
    pub num_levels: usize,
    /// Window side `m` in pixels.
    pub window: usize,
    pub stride: usize,
    /// Max-pool side and stride.
    pub pool: usize,
    /// `E_f`: channels whose global ratio exceeds this are forwarded.
    pub energy_forward: f64,
    /// `E_c`: channels whose global ratio is below this are discarded.
    pub energy_cutoff: f64,
    pub aggregation: Aggregation,
    /// Upper bound on training patches per unit; 0 disables subsampling.
    pub max_patches: usize,
}

impl Default for HopConfig {
    /// Three levels sized for 32×32 inputs.
    fn default() -> Self {
        Self {
            num_levels: 3,
            window: 5,
            stride: 1,
            pool: 2,
            energy_forward: 0.02,
            energy_cutoff: 0.0005,
            aggregation: Aggregation::Flatten,
            max_patches: 0,
        }
    }
}

impl HopConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.num_levels == 0 {
            return bad("num_levels must be positive");
        }
        if self.window == 0 || self.stride == 0 || self.pool == 0 {
            return bad("window, stride and pool must be positive");
        }
        if !(0.0..=1.0).contains(&self.energy_forward) {
            return bad("energy_forward must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.energy_cutoff) {
            return bad("energy_cutoff must lie in [0, 1]");
        }
        if self.energy_cutoff > self.energy_forward {
            return bad("energy_cutoff must not exceed energy_forward");
        }
        Ok(())
    }

    /// Side of the input region seen by one unit response at each level.
    pub fn receptive_field_sides(&self) -> Vec<usize> {
        let mut sides = Vec::with_capacity(self.num_levels);
        let (mut side, mut jump) = (1usize, 1usize);
        for level in 1..=self.num_levels {
            side += (self.window - 1) * jump;
            jump *= self.stride;
            sides.push(side);
            if level < self.num_levels {
                side += (self.pool - 1) * jump;
                jump *= self.pool;
            }
        }
        sides
    }

    /// Status of a channel with the given global ratio at `level` (1-based).
    pub fn classify(&self, global_ratio: f64, level: usize) -> ChannelStatus {
        if global_ratio < self.energy_cutoff {
            ChannelStatus::Discarded
        } else if global_ratio > self.energy_forward && level < self.num_levels {
            ChannelStatus::Intermediate
        } else {
            ChannelStatus::Leaf
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelStatus {
    Intermediate,
    Leaf,
    Discarded,
}

impl ChannelStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelStatus::Intermediate => "intermediate",
            ChannelStatus::Leaf => "leaf",
            ChannelStatus::Discarded => "discarded",
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            ChannelStatus::Intermediate => 0,
            ChannelStatus::Leaf => 1,
            ChannelStatus::Discarded => 2,
        }
    }

    pub(crate) fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(ChannelStatus::Intermediate),
            1 => Some(ChannelStatus::Leaf),
            2 => Some(ChannelStatus::Discarded),
            _ => None,
        }
    }
}

impl fmt::Display for ChannelStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
