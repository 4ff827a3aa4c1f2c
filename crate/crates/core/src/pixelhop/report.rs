use std::fmt::Write as _;

use super::{ChannelStatus, HopTree};

/// Per-level statistics of a trained tree.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSummary {
    pub level: usize,
    pub units: usize,
    pub intermediate: usize,
    pub leaf: usize,
    pub discarded: usize,
    /// `None` when no unit reached this level.
    pub min_global_ratio: Option<f64>,
    pub max_global_ratio: Option<f64>,
    /// Global energy share discarded at this level and all levels above it.
    pub cumulative_discarded: f64,
    pub receptive_field: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelReport {
    pub unit_count: usize,
    pub parameter_count: usize,
    pub feature_len: usize,
    pub levels: Vec<LevelSummary>,
}

impl ModelReport {
    pub fn new(tree: &HopTree) -> Self {
        let config = tree.config();
        let rf = config.receptive_field_sides();
        let mut cumulative = 0.0;
        let levels = (1..=config.num_levels)
            .map(|level| {
                let chans: Vec<_> = tree.channels().iter().filter(|c| c.level == level).collect();
                let count = |s: ChannelStatus| chans.iter().filter(|c| c.status == s).count();
                cumulative += chans
                    .iter()
                    .filter(|c| c.status == ChannelStatus::Discarded)
                    .map(|c| c.global_ratio)
                    .sum::<f64>();
                let ratios = chans.iter().map(|c| c.global_ratio);
                LevelSummary {
                    level,
                    units: tree.units().iter().filter(|u| u.level == level).count(),
                    intermediate: count(ChannelStatus::Intermediate),
                    leaf: count(ChannelStatus::Leaf),
                    discarded: count(ChannelStatus::Discarded),
                    min_global_ratio: ratios.clone().reduce(f64::min),
                    max_global_ratio: ratios.reduce(f64::max),
                    cumulative_discarded: cumulative,
                    receptive_field: rf[level - 1],
                }
            })
            .collect();

        // Kernels needed at inference (non-discarded) plus the residual mean.
        let parameter_count = tree
            .units()
            .iter()
            .map(|u| {
                let kept = tree
                    .unit_channels(u.id)
                    .iter()
                    .filter(|c| c.status != ChannelStatus::Discarded)
                    .count();
                u.kernels.dim() * (kept + 1)
            })
            .sum();

        Self {
            unit_count: tree.units().len(),
            parameter_count,
            feature_len: tree.feature_len(),
            levels,
        }
    }
}

pub(crate) fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Stable, line-oriented description of a tree: totals, one summary line per
/// level, then one tab-separated line per channel.
pub fn describe(tree: &HopTree) -> String {
    let report = ModelReport::new(tree);
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), sig9);
    let mut out = String::new();
    writeln!(out, "units\t{}", report.unit_count).unwrap();
    writeln!(out, "parameters\t{}", report.parameter_count).unwrap();
    writeln!(out, "features\t{}", report.feature_len).unwrap();
    for l in &report.levels {
        writeln!(
            out,
            "level\t{}\tunits\t{}\tintermediate\t{}\tleaf\t{}\tdiscarded\t{}\tmin_global_ratio\t{}\tmax_global_ratio\t{}\tdiscarded_energy\t{}\treceptive_field\t{}",
            l.level,
            l.units,
            l.intermediate,
            l.leaf,
            l.discarded,
            opt(l.min_global_ratio),
            opt(l.max_global_ratio),
            sig9(l.cumulative_discarded),
            l.receptive_field,
        )
        .unwrap();
    }
    writeln!(out, "# level\tunit\tkernel\tstatus\tlocal_ratio\tglobal_ratio").unwrap();
    for c in tree.channels() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            c.level,
            c.unit_id,
            c.kernel_index,
            c.status,
            sig9(c.local_ratio),
            sig9(c.global_ratio)
        )
        .unwrap();
    }
    out
}
