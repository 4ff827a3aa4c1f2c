//! The `SSLHOP01` model container.
//!
//! ```text
//! magic            8 bytes  "SSLHOP01"
//! section count    u64
//! section table    count × (tag: 8 bytes, offset: u64, length: u64)
//! sections         CONFIG, TREE and optionally HEAD, in table order
//! ```
//!
//! All integers are little-endian `u64`, reals are little-endian IEEE-754
//! `f64`, vectors carry a `u64` length prefix and matrices a `u64` row and
//! column count. Offsets are absolute from the start of the file.

use std::fs;
use std::path::Path;

use super::bytes::{Reader, Writer};
use crate::decision::{Classifier, LLSRModel, Standardizer};
use crate::error::{Error, Result};
use crate::pixelhop::{
    Aggregation, ChannelNode, ChannelRef, ChannelStatus, HopConfig, HopTree, LayoutEntry, Unit,
};
use crate::saab::SaabKernels;

pub const MODEL_MAGIC: &[u8; 8] = b"SSLHOP01";
const TAG_CONFIG: &[u8; 8] = b"CONFIG\0\0";
const TAG_TREE: &[u8; 8] = b"TREE\0\0\0\0";
const TAG_HEAD: &[u8; 8] = b"HEAD\0\0\0\0";

/// A trained feature extractor with an optional decision head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub tree: HopTree,
    pub head: Option<Classifier>,
}

impl ModelFile {
    pub fn config(&self) -> &HopConfig {
        self.tree.config()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut sections: Vec<(&[u8; 8], Vec<u8>)> = vec![
            (TAG_CONFIG, encode_config(self.config())),
            (TAG_TREE, encode_tree(&self.tree)),
        ];
        if let Some(head) = &self.head {
            sections.push((TAG_HEAD, encode_head(head)));
        }

        let mut w = Writer::new();
        w.bytes(MODEL_MAGIC);
        w.usize(sections.len());
        let mut offset = 8 + 8 + sections.len() * 24;
        for (tag, body) in &sections {
            w.bytes(*tag);
            w.usize(offset);
            w.usize(body.len());
            offset += body.len();
        }
        for (_, body) in &sections {
            w.bytes(body);
        }
        debug_assert_eq!(w.len(), offset);
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "model file");
        if r.bytes(8).ok() != Some(&MODEL_MAGIC[..]) {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let count = r.count(24)?;
        let mut config = None;
        let mut tree = None;
        let mut head = None;
        let mut end_of_data = 8 + 8 + 24 * count;
        for _ in 0..count {
            let tag = r.bytes(8)?;
            let offset = r.usize()?;
            let len = r.usize()?;
            let body = offset
                .checked_add(len)
                .and_then(|end| bytes.get(offset..end))
                .ok_or_else(|| Error::Format("truncated model file".into()))?;
            end_of_data = end_of_data.max(offset + len);
            let duplicate = match tag {
                t if t == TAG_CONFIG => config.replace(decode_config(body)?).is_some(),
                t if t == TAG_TREE => tree.replace(body).is_some(),
                t if t == TAG_HEAD => head.replace(decode_head(body)?).is_some(),
                _ => return Err(Error::Format("unknown model section".into())),
            };
            if duplicate {
                return Err(Error::Format("repeated model section".into()));
            }
        }
        if end_of_data != bytes.len() {
            return Err(Error::Format("trailing bytes after model sections".into()));
        }
        let config = config.ok_or_else(|| Error::Format("model file lacks CONFIG".into()))?;
        let tree = decode_tree(tree.ok_or_else(|| Error::Format("model file lacks TREE".into()))?, config)?;
        if let Some(h) = &head {
            if h.standardizer.dim() != tree.feature_len() || h.model.n_features() != tree.feature_len() {
                return Err(Error::Format("head width differs from the feature length".into()));
            }
        }
        Ok(Self { tree, head })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn encode_config(c: &HopConfig) -> Vec<u8> {
    let mut w = Writer::new();
    w.usize(c.num_levels);
    w.usize(c.window);
    w.usize(c.stride);
    w.usize(c.pool);
    w.f64(c.energy_forward);
    w.f64(c.energy_cutoff);
    w.u64(c.aggregation.code());
    w.usize(c.max_patches);
    w.into_inner()
}

fn decode_config(body: &[u8]) -> Result<HopConfig> {
    let mut r = Reader::new(body, "CONFIG section");
    let c = HopConfig {
        num_levels: r.usize()?,
        window: r.usize()?,
        stride: r.usize()?,
        pool: r.usize()?,
        energy_forward: r.f64()?,
        energy_cutoff: r.f64()?,
        aggregation: Aggregation::from_code(r.u64()?)
            .ok_or_else(|| Error::Format("unknown aggregation code".into()))?,
        max_patches: r.usize()?,
    };
    r.finish()?;
    c.validate()?;
    Ok(c)
}

fn encode_option(w: &mut Writer, v: Option<usize>) {
    match v {
        Some(x) => {
            w.u64(1);
            w.usize(x);
        }
        None => {
            w.u64(0);
            w.u64(0);
        }
    }
}

fn decode_option(r: &mut Reader<'_>) -> Result<Option<usize>> {
    let flag = r.u64()?;
    let v = r.usize()?;
    match flag {
        0 => Ok(None),
        1 => Ok(Some(v)),
        _ => Err(Error::Format("bad option flag".into())),
    }
}

fn encode_tree(t: &HopTree) -> Vec<u8> {
    let mut w = Writer::new();
    w.usize(t.units().len());
    for u in t.units() {
        w.usize(u.id);
        w.usize(u.level);
        encode_option(&mut w, u.parent.map(|p| p.unit));
        w.usize(u.parent.map_or(0, |p| p.kernel));
        w.usize(u.input_dims.0);
        w.usize(u.input_dims.1);
        w.usize(u.input_dims.2);
        w.vector(u.kernels.dc_kernel());
        w.matrix(u.kernels.ac_kernels());
        w.vector(u.kernels.residual_mean());
        w.vector(u.kernels.energies());
    }
    w.usize(t.channels().len());
    for c in t.channels() {
        w.usize(c.level);
        w.usize(c.unit_id);
        w.usize(c.kernel_index);
        w.f64(c.local_ratio);
        w.f64(c.global_ratio);
        w.u64(c.status.code());
        encode_option(&mut w, c.child_unit);
    }
    w.usize(t.feature_layout().len());
    for e in t.feature_layout() {
        w.usize(e.channel.unit);
        w.usize(e.channel.kernel);
        w.usize(e.height);
        w.usize(e.width);
    }
    w.into_inner()
}

fn decode_tree(body: &[u8], config: HopConfig) -> Result<HopTree> {
    let mut r = Reader::new(body, "TREE section");
    let n_units = r.count(8)?;
    let mut units = Vec::with_capacity(n_units);
    for _ in 0..n_units {
        let id = r.usize()?;
        let level = r.usize()?;
        let parent_unit = decode_option(&mut r)?;
        let parent_kernel = r.usize()?;
        let input_dims = (r.usize()?, r.usize()?, r.usize()?);
        let kernels = SaabKernels::from_parts(r.vector()?, r.matrix()?, r.vector()?, r.vector()?)?;
        units.push(Unit {
            id,
            level,
            parent: parent_unit.map(|unit| ChannelRef {
                unit,
                kernel: parent_kernel,
            }),
            input_dims,
            kernels,
        });
    }
    let n_channels = r.count(8)?;
    let mut channels = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        channels.push(ChannelNode {
            level: r.usize()?,
            unit_id: r.usize()?,
            kernel_index: r.usize()?,
            local_ratio: r.f64()?,
            global_ratio: r.f64()?,
            status: ChannelStatus::from_code(r.u64()?)
                .ok_or_else(|| Error::Format("unknown channel status".into()))?,
            child_unit: decode_option(&mut r)?,
        });
    }
    let n_layout = r.count(32)?;
    let mut layout = Vec::with_capacity(n_layout);
    for _ in 0..n_layout {
        layout.push(LayoutEntry {
            channel: ChannelRef {
                unit: r.usize()?,
                kernel: r.usize()?,
            },
            height: r.usize()?,
            width: r.usize()?,
        });
    }
    r.finish()?;
    HopTree::from_parts(config, units, channels, layout)
}

fn encode_head(h: &Classifier) -> Vec<u8> {
    let mut w = Writer::new();
    w.vector(h.standardizer.mean());
    w.vector(h.standardizer.scale());
    w.matrix(h.model.weights());
    w.vector(h.model.intercept());
    w.f64(h.model.ridge());
    w.into_inner()
}

fn decode_head(body: &[u8]) -> Result<Classifier> {
    let mut r = Reader::new(body, "HEAD section");
    let standardizer = Standardizer::from_parts(r.vector()?, r.vector()?)?;
    let model = LLSRModel::from_parts(r.matrix()?, r.vector()?, r.f64()?)?;
    r.finish()?;
    if standardizer.dim() != model.n_features() {
        return Err(Error::Format("head standardizer and weights disagree".into()));
    }
    Ok(Classifier {
        standardizer,
        model,
    })
}
