//! `key=value` training configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys are errors. Keys not given keep their [`HopConfig::default`] values;
//! an absent `head.ridge` (or `head.ridge=auto`) selects the default ridge.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::pixelhop::HopConfig;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainConfig {
    pub hop: HopConfig,
    pub ridge: Option<f64>,
}

fn value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("bad value `{raw}` for `{key}`")))
}

pub fn parse_config(text: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, raw) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
        if !seen.insert(key.to_string()) {
            return Err(Error::Config(format!("duplicate key `{key}`")));
        }
        let h = &mut cfg.hop;
        match key {
            "num_levels" => h.num_levels = value(key, raw)?,
            "window" => h.window = value(key, raw)?,
            "stride" => h.stride = value(key, raw)?,
            "pool" => h.pool = value(key, raw)?,
            "energy_forward" => h.energy_forward = value(key, raw)?,
            "energy_cutoff" => h.energy_cutoff = value(key, raw)?,
            "aggregation" => h.aggregation = raw.parse()?,
            "max_patches" => h.max_patches = value(key, raw)?,
            "head.ridge" => {
                cfg.ridge = if raw == "auto" { None } else { Some(value(key, raw)?) };
            }
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
    }
    cfg.hop.validate()?;
    if let Some(r) = cfg.ridge {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::Config("head.ridge must be a finite nonnegative number".into()));
        }
    }
    Ok(cfg)
}

/// The architecture as `key=value` lines, in a fixed key order.
pub fn format_hop_config(h: &HopConfig) -> String {
    let mut out = String::new();
    writeln!(out, "num_levels={}", h.num_levels).unwrap();
    writeln!(out, "window={}", h.window).unwrap();
    writeln!(out, "stride={}", h.stride).unwrap();
    writeln!(out, "pool={}", h.pool).unwrap();
    writeln!(out, "energy_forward={}", h.energy_forward).unwrap();
    writeln!(out, "energy_cutoff={}", h.energy_cutoff).unwrap();
    writeln!(out, "aggregation={}", h.aggregation).unwrap();
    writeln!(out, "max_patches={}", h.max_patches).unwrap();
    out
}

pub fn format_config(cfg: &TrainConfig) -> String {
    let mut out = format_hop_config(&cfg.hop);
    match cfg.ridge {
        Some(r) => writeln!(out, "head.ridge={r}").unwrap(),
        None => writeln!(out, "head.ridge=auto").unwrap(),
    }
    out
}
