//! `SSLFEA01` feature matrices: magic, `u64` rows, `u64` columns, then
//! row-major little-endian `f64` values.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::bytes::{Reader, Writer};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 8] = b"SSLFEA01";

pub fn encode_features(m: &Array2<f64>) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(FEATURE_MAGIC);
    w.matrix(m);
    w.into_inner()
}

pub fn decode_features(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut r = Reader::new(bytes, "feature file");
    if r.bytes(8).ok() != Some(&FEATURE_MAGIC[..]) {
        return Err(Error::Format("not a feature file (bad magic)".into()));
    }
    let m = r.matrix()?;
    r.finish()?;
    Ok(m)
}

pub fn write_features(path: &Path, m: &Array2<f64>) -> Result<()> {
    fs::write(path, encode_features(m))?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Array2<f64>> {
    decode_features(&fs::read(path)?)
}
