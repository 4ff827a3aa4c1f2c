use std::borrow::Cow;

use ndarray::{Array1, Array2, Array3, Axis};
use rayon::prelude::*;

use super::{extract_patches, max_pool, Aggregation, ChannelStatus, HopConfig};
use crate::error::{shape, Error, Result};
use crate::saab::{apply_saab, energy_ratios, fit_saab, SaabKernels};
use crate::tensor::{PatchMatrix, ResponseMap};

/// Identifies one output channel: kernel `kernel` (0 = DC) of unit `unit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelRef {
    pub unit: usize,
    pub kernel: usize,
}

/// One fitted Saab unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub id: usize,
    pub level: usize,
    /// The intermediate channel feeding this unit; `None` for the root.
    pub parent: Option<ChannelRef>,
    /// `(height, width, channels)` of the maps the unit is trained on.
    pub input_dims: (usize, usize, usize),
    pub kernels: SaabKernels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelNode {
    pub level: usize,
    pub unit_id: usize,
    pub kernel_index: usize,
    /// Share of the owning unit's energy.
    pub local_ratio: f64,
    /// `local_ratio` times the parent channel's global ratio.
    pub global_ratio: f64,
    pub status: ChannelStatus,
    pub child_unit: Option<usize>,
}

impl ChannelNode {
    pub fn reference(&self) -> ChannelRef {
        ChannelRef {
            unit: self.unit_id,
            kernel: self.kernel_index,
        }
    }
}

/// A leaf channel's slot in the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutEntry {
    pub channel: ChannelRef,
    pub height: usize,
    pub width: usize,
}

/// Spatial sizes at one level: unit input, unit output and (below the last
/// level) the pooled output handed to the next level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelShape {
    pub input: (usize, usize),
    pub output: (usize, usize),
    pub pooled: Option<(usize, usize)>,
}

/// Spatial plan for every level of `config` on `height × width` inputs.
pub fn level_shapes(config: &HopConfig, height: usize, width: usize) -> Result<Vec<LevelShape>> {
    let mut shapes = Vec::with_capacity(config.num_levels);
    let (mut h, mut w) = (height, width);
    for level in 1..=config.num_levels {
        if config.window > h.min(w) {
            return Err(if level == 1 {
                Error::WindowExceedsInput
            } else {
                Error::ArchitectureTooDeep
            });
        }
        let output = (
            (h - config.window) / config.stride + 1,
            (w - config.window) / config.stride + 1,
        );
        let pooled = if level < config.num_levels {
            let p = (output.0 / config.pool, output.1 / config.pool);
            if p.0 == 0 || p.1 == 0 {
                return Err(Error::ArchitectureTooDeep);
            }
            Some(p)
        } else {
            None
        };
        shapes.push(LevelShape {
            input: (h, w),
            output,
            pooled,
        });
        if let Some(p) = pooled {
            (h, w) = p;
        }
    }
    Ok(shapes)
}

/// A trained multi-level model.
#[derive(Debug, Clone, PartialEq)]
pub struct HopTree {
    config: HopConfig,
    units: Vec<Unit>,
    channels: Vec<ChannelNode>,
    feature_layout: Vec<LayoutEntry>,
    /// Index of each unit's first channel in `channels`.
    offsets: Vec<usize>,
}

impl HopTree {
    /// Reassembles a tree from stored parts, checking every structural
    /// invariant.
    pub fn from_parts(
        config: HopConfig,
        units: Vec<Unit>,
        channels: Vec<ChannelNode>,
        feature_layout: Vec<LayoutEntry>,
    ) -> Result<Self> {
        config.validate()?;
        let bad = |msg: String| Err(Error::Format(msg));
        if units.is_empty() {
            return bad("tree has no units".into());
        }
        let mut offsets = Vec::with_capacity(units.len());
        let mut next = 0;
        for (i, unit) in units.iter().enumerate() {
            if unit.id != i {
                return bad(format!("unit {i} stored with id {}", unit.id));
            }
            match (i, unit.parent) {
                (0, None) if unit.level == 1 => {}
                (0, _) => return bad("root unit must be a parentless level-1 unit".into()),
                (_, None) => return bad(format!("unit {i} has no parent")),
                (_, Some(p)) => {
                    if p.unit >= i
                        || units[p.unit].level + 1 != unit.level
                        || p.kernel >= units[p.unit].kernels.kernel_count()
                    {
                        return bad(format!("unit {i} has an invalid parent"));
                    }
                }
            }
            if unit.level > config.num_levels {
                return bad(format!("unit {i} lies below the last level"));
            }
            offsets.push(next);
            next += unit.kernels.kernel_count();
        }
        if channels.len() != next {
            return bad(format!("{} channels for {next} kernels", channels.len()));
        }
        for unit in &units {
            for k in 0..unit.kernels.kernel_count() {
                let ch = &channels[offsets[unit.id] + k];
                if ch.unit_id != unit.id || ch.kernel_index != k || ch.level != unit.level {
                    return bad(format!("channel ({}, {k}) is out of place", unit.id));
                }
                if config.classify(ch.global_ratio, ch.level) != ch.status {
                    return bad(format!("channel ({}, {k}) has an inconsistent status", unit.id));
                }
                let child_ok = match (ch.status, ch.child_unit) {
                    (ChannelStatus::Intermediate, Some(c)) => {
                        c < units.len() && units[c].parent == Some(ch.reference())
                    }
                    (ChannelStatus::Intermediate, None) => false,
                    (_, child) => child.is_none(),
                };
                if !child_ok {
                    return bad(format!("channel ({}, {k}) has an invalid child link", unit.id));
                }
            }
            if let Some(p) = unit.parent {
                if channels[offsets[p.unit] + p.kernel].child_unit != Some(unit.id) {
                    return bad(format!("unit {} is not linked from its parent", unit.id));
                }
            }
        }
        let tree = Self {
            config,
            units,
            channels,
            feature_layout,
            offsets,
        };
        if tree.feature_layout != tree.compute_layout()? {
            return bad("feature layout does not match the leaf channels".into());
        }
        Ok(tree)
    }

    pub fn config(&self) -> &HopConfig {
        &self.config
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    /// Every channel, ordered by `(level, unit, kernel)`.
    pub fn channels(&self) -> &[ChannelNode] {
        &self.channels
    }

    pub fn feature_layout(&self) -> &[LayoutEntry] {
        &self.feature_layout
    }

    pub fn channel(&self, r: ChannelRef) -> &ChannelNode {
        &self.channels[self.offsets[r.unit] + r.kernel]
    }

    pub fn unit_channels(&self, unit: usize) -> &[ChannelNode] {
        let start = self.offsets[unit];
        &self.channels[start..start + self.units[unit].kernels.kernel_count()]
    }

    /// `(height, width, channels)` of the images the tree was trained on.
    pub fn input_dims(&self) -> (usize, usize, usize) {
        self.units[0].input_dims
    }

    pub fn feature_len(&self) -> usize {
        self.feature_layout
            .iter()
            .map(|e| match self.config.aggregation {
                Aggregation::Flatten => e.height * e.width,
                _ => 1,
            })
            .sum()
    }

    fn compute_layout(&self) -> Result<Vec<LayoutEntry>> {
        let (h, w, _) = self.input_dims();
        let shapes = level_shapes(&self.config, h, w)?;
        Ok(self
            .channels
            .iter()
            .filter(|c| c.status == ChannelStatus::Leaf)
            .map(|c| {
                let s = &shapes[c.level - 1];
                let (height, width) = s.pooled.unwrap_or(s.output);
                LayoutEntry {
                    channel: c.reference(),
                    height,
                    width,
                }
            })
            .collect())
    }
}

/// A unit waiting to be fitted at the current level.
struct PendingUnit<'a> {
    parent: Option<ChannelRef>,
    parent_global: f64,
    inputs: Cow<'a, [ResponseMap]>,
}

struct FittedUnit {
    kernels: SaabKernels,
    channels: Vec<ChannelNode>,
    /// Pooled training inputs for each intermediate channel, by kernel index.
    forwarded: Vec<(usize, Vec<ResponseMap>)>,
}

/// Trains a PixelHop++ tree level by level on a set of equally sized images.
pub fn fit_hoptree(images: &[ResponseMap], config: &HopConfig) -> Result<HopTree> {
    config.validate()?;
    if images.len() < 2 {
        return Err(Error::InsufficientSamples);
    }
    let dims = images[0].dims();
    if images.iter().any(|im| im.dims() != dims) {
        return Err(shape("training images differ in size"));
    }
    level_shapes(config, dims.0, dims.1)?;

    let mut units: Vec<Unit> = Vec::new();
    let mut channels: Vec<ChannelNode> = Vec::new();
    let mut pending = vec![PendingUnit {
        parent: None,
        parent_global: 1.0,
        inputs: Cow::Borrowed(images),
    }];

    for level in 1..=config.num_levels {
        if pending.is_empty() {
            break;
        }
        let first_id = units.len();
        let fitted: Vec<FittedUnit> = pending
            .par_iter()
            .enumerate()
            .map(|(i, p)| fit_unit(first_id + i, level, p, config))
            .collect::<Result<_>>()?;

        let mut next_pending = Vec::new();
        let mut next_id = first_id + pending.len();
        for (i, (p, mut f)) in pending.into_iter().zip(fitted).enumerate() {
            let id = first_id + i;
            for (kernel, inputs) in f.forwarded {
                f.channels[kernel].child_unit = Some(next_id);
                next_id += 1;
                next_pending.push(PendingUnit {
                    parent: Some(ChannelRef { unit: id, kernel }),
                    parent_global: f.channels[kernel].global_ratio,
                    inputs: Cow::Owned(inputs),
                });
            }
            units.push(Unit {
                id,
                level,
                parent: p.parent,
                input_dims: p.inputs[0].dims(),
                kernels: f.kernels,
            });
            channels.extend(f.channels);
        }
        pending = next_pending;
    }

    let offsets = units
        .iter()
        .scan(0, |acc, u| {
            let start = *acc;
            *acc += u.kernels.kernel_count();
            Some(start)
        })
        .collect();
    let mut tree = HopTree {
        config: config.clone(),
        units,
        channels,
        feature_layout: Vec::new(),
        offsets,
    };
    tree.feature_layout = tree.compute_layout()?;
    Ok(tree)
}

fn fit_unit(id: usize, level: usize, pending: &PendingUnit<'_>, config: &HopConfig) -> Result<FittedUnit> {
    let inputs = &pending.inputs;
    let per_image: Vec<PatchMatrix> = inputs
        .par_iter()
        .map(|im| extract_patches(im, config.window, config.stride))
        .collect::<Result<_>>()?;
    let dim = per_image[0].dim();
    let total: usize = per_image.iter().map(PatchMatrix::n_patches).sum();
    let mut data = Vec::with_capacity(total * dim);
    for p in &per_image {
        data.extend(p.rows().iter());
    }
    drop(per_image);
    let patches = PatchMatrix::from_vec(total, dim, data)?.subsample(config.max_patches);
    let kernels = fit_saab(&patches)?;
    drop(patches);

    let local = match energy_ratios(&kernels) {
        Ok(r) => r,
        // Zero total energy: fit_saab kept no AC kernels, DC takes everything.
        Err(Error::DegenerateUnit) => {
            let mut r = Array1::zeros(kernels.kernel_count());
            r[0] = 1.0;
            r
        }
        Err(e) => return Err(e),
    };
    let channels: Vec<ChannelNode> = local
        .iter()
        .enumerate()
        .map(|(k, &local_ratio)| {
            let global_ratio = local_ratio * pending.parent_global;
            ChannelNode {
                level,
                unit_id: id,
                kernel_index: k,
                local_ratio,
                global_ratio,
                status: config.classify(global_ratio, level),
                child_unit: None,
            }
        })
        .collect();

    let forward: Vec<usize> = channels
        .iter()
        .filter(|c| c.status == ChannelStatus::Intermediate)
        .map(|c| c.kernel_index)
        .collect();
    let mut forwarded: Vec<(usize, Vec<ResponseMap>)> =
        forward.iter().map(|&k| (k, Vec::with_capacity(inputs.len()))).collect();
    if !forward.is_empty() {
        let pooled: Vec<ResponseMap> = inputs
            .par_iter()
            .map(|im| {
                let resp = unit_response(im, &kernels, &forward, config)?;
                max_pool(&resp, config.pool)
            })
            .collect::<Result<_>>()?;
        for map in pooled {
            for (slot, (_, maps)) in forwarded.iter_mut().enumerate() {
                maps.push(map.channel(slot)?);
            }
        }
    }
    Ok(FittedUnit {
        kernels,
        channels,
        forwarded,
    })
}

/// Responses of the `keep` kernels as an `out_h × out_w × |keep|` map.
fn unit_response(
    input: &ResponseMap,
    kernels: &SaabKernels,
    keep: &[usize],
    config: &HopConfig,
) -> Result<ResponseMap> {
    let (h, w, _) = input.dims();
    let out_h = (h - config.window) / config.stride + 1;
    let out_w = (w - config.window) / config.stride + 1;
    let patches = extract_patches(input, config.window, config.stride)?;
    let resp = apply_saab(&patches, kernels, keep)?;
    let data = Array3::from_shape_vec((out_h, out_w, keep.len()), resp.into_raw_vec_and_offset().0)
        .map_err(|e| shape(e.to_string()))?;
    ResponseMap::from_array(data)
}

/// Runs one image through the tree and returns its feature vector.
pub fn transform(image: &ResponseMap, tree: &HopTree) -> Result<Vec<f64>> {
    if image.dims() != tree.input_dims() {
        return Err(Error::InputShapeDiffers);
    }
    let config = &tree.config;
    let mut leaves: Vec<Option<ResponseMap>> = vec![None; tree.channels.len()];
    let mut stack: Vec<(usize, Cow<'_, ResponseMap>)> = vec![(0, Cow::Borrowed(image))];
    while let Some((unit_id, input)) = stack.pop() {
        let unit = &tree.units[unit_id];
        let active: Vec<&ChannelNode> = tree
            .unit_channels(unit_id)
            .iter()
            .filter(|c| c.status != ChannelStatus::Discarded)
            .collect();
        if active.is_empty() {
            continue;
        }
        let keep: Vec<usize> = active.iter().map(|c| c.kernel_index).collect();
        let mut resp = unit_response(&input, &unit.kernels, &keep, config)?;
        if unit.level < config.num_levels {
            resp = max_pool(&resp, config.pool)?;
        }
        for (slot, ch) in active.iter().enumerate() {
            let map = resp.channel(slot)?;
            match ch.child_unit {
                Some(child) => stack.push((child, Cow::Owned(map))),
                None => leaves[tree.offsets[unit_id] + ch.kernel_index] = Some(map),
            }
        }
    }

    let mut features = Vec::with_capacity(tree.feature_len());
    for entry in &tree.feature_layout {
        let map = leaves[tree.offsets[entry.channel.unit] + entry.channel.kernel]
            .as_ref()
            .expect("every leaf is reached");
        let values = map.as_slice();
        match config.aggregation {
            Aggregation::Flatten => features.extend_from_slice(values),
            Aggregation::SpatialMax => {
                features.push(values.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            }
            Aggregation::SpatialMean => {
                features.push(values.iter().sum::<f64>() / values.len() as f64)
            }
        }
    }
    Ok(features)
}

/// Feature matrix for a batch of images, one row per image in input order.
pub fn transform_batch(images: &[ResponseMap], tree: &HopTree) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = images
        .par_iter()
        .map(|im| transform(im, tree))
        .collect::<Result<_>>()?;
    let d = tree.feature_len();
    let mut out = Array2::zeros((rows.len(), d));
    for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(&Array1::from(src));
    }
    Ok(out)
}
