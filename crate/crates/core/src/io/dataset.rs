use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::ResponseMap;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Images with optional labels. Pixel values are scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<ResponseMap>,
    pub labels: Option<Vec<usize>>,
    pub class_count: Option<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Labels("dataset has no labels".into()))
    }

    /// Keeps the listed images (and labels) in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            class_count: self.class_count,
        }
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(Error::NotIdx)
}

/// Decodes an IDX3 unsigned-byte image tensor.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<ResponseMap>> {
    if be_u32(bytes, 0)? != IDX_IMAGES_MAGIC {
        return Err(Error::NotIdx);
    }
    let n = be_u32(bytes, 4)? as usize;
    let h = be_u32(bytes, 8)? as usize;
    let w = be_u32(bytes, 12)? as usize;
    let body = &bytes[16..];
    let size = h * w;
    if body.len() != n * size {
        return Err(Error::Format(format!(
            "IDX image file holds {} pixel bytes, header promises {}",
            body.len(),
            n * size
        )));
    }
    if n > 0 && size == 0 {
        return Err(Error::Format("IDX images have zero area".into()));
    }
    body.chunks_exact(size.max(1))
        .take(n)
        .map(|px| ResponseMap::new(h, w, 1, px.iter().map(|&b| f64::from(b) / 255.0).collect()))
        .collect()
}

/// Decodes an IDX1 unsigned-byte label vector.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    if be_u32(bytes, 0)? != IDX_LABELS_MAGIC {
        return Err(Error::NotIdx);
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Format(format!(
            "IDX label file holds {} labels, header promises {n}",
            body.len()
        )));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// Loads IDX images and, optionally, their labels. The class count is
/// inferred as the largest label plus one.
pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<Dataset> {
    let images = parse_idx_images(&fs::read(images)?)?;
    let labels = match labels {
        Some(p) => {
            let l = parse_idx_labels(&fs::read(p)?)?;
            if l.len() != images.len() {
                return Err(Error::LabelCountMismatch);
            }
            Some(l)
        }
        None => None,
    };
    let class_count = labels.as_ref().and_then(|l| l.iter().max().map(|m| m + 1));
    Ok(Dataset {
        images,
        labels,
        class_count,
    })
}

pub fn encode_idx_images(n: usize, height: usize, width: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), n * height * width, "pixel count");
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, height as u32, width as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    for v in [IDX_LABELS_MAGIC, labels.len() as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(labels);
    out
}

/// Parses a binary (`P5`) PGM image into a single-channel map in `[0, 1]`.
pub fn parse_pgm(bytes: &[u8]) -> Result<ResponseMap> {
    let bad = |msg: &str| Error::Format(format!("PGM: {msg}"));
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("only binary P5 files are supported"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(bad("bad dimensions or maxval"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let bpp = if maxval < 256 { 1 } else { 2 };
    let raster = bytes.get(pos..pos + w * h * bpp).ok_or_else(|| bad("truncated raster"))?;
    let scale = maxval as f64;
    let values = if bpp == 1 {
        raster.iter().map(|&b| f64::from(b) / scale).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / scale)
            .collect()
    };
    ResponseMap::new(h, w, 1, values)
}

/// Loads a directory with one subdirectory per class holding `.pgm` files.
/// Classes are numbered in sorted subdirectory-name order.
pub fn load_pgm_dir(root: &Path) -> Result<Dataset> {
    let mut classes: Vec<_> = fs::read_dir(root)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|e| e.path().is_dir())
        .map(|e| e.path())
        .collect();
    classes.sort();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (label, dir) in classes.iter().enumerate() {
        let mut files: Vec<_> = fs::read_dir(dir)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
            .collect();
        files.sort();
        for f in files {
            images.push(parse_pgm(&fs::read(&f)?)?);
            labels.push(label);
        }
    }
    if let Some(first) = images.first() {
        if images.iter().any(|im| im.dims() != first.dims()) {
            return Err(Error::Format("PGM images differ in size".into()));
        }
    }
    Ok(Dataset {
        images,
        labels: Some(labels),
        class_count: Some(classes.len()),
    })
}

/// IDX file (with optional label file) or PGM class directory.
pub fn load_dataset(images: &Path, labels: Option<&Path>) -> Result<Dataset> {
    if images.is_dir() {
        if labels.is_some() {
            return Err(Error::Labels(
                "labels come from subdirectory names for PGM directories".into(),
            ));
        }
        load_pgm_dir(images)
    } else {
        load_idx(images, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idx_scales_bytes() {
        let bytes = encode_idx_images(2, 2, 2, &[0, 0, 0, 0, 255, 255, 255, 255]);
        let images = parse_idx_images(&bytes).unwrap();
        assert_eq!(images.len(), 2);
        assert_eq!(images[0].dims(), (2, 2, 1));
        assert!(images[0].as_slice().iter().all(|&v| v == 0.0));
        assert!(images[1].as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn idx_rejects_bad_magic_and_truncation() {
        let mut bytes = encode_idx_images(1, 2, 2, &[1, 2, 3, 4]);
        assert!(matches!(parse_idx_labels(&bytes), Err(Error::NotIdx)));
        bytes.pop();
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Format(_))));
        assert!(matches!(parse_idx_images(&[0, 0]), Err(Error::NotIdx)));
    }

    #[test]
    fn label_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let im = dir.path().join("im");
        let lb = dir.path().join("lb");
        fs::write(&im, encode_idx_images(2, 1, 1, &[0, 9])).unwrap();
        fs::write(&lb, encode_idx_labels(&[1, 2, 3])).unwrap();
        assert!(matches!(load_idx(&im, Some(&lb)), Err(Error::LabelCountMismatch)));
    }

    #[test]
    fn pgm_with_comment() {
        let mut bytes = b"P5\n# made by hand\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 51, 102, 153, 204, 255]);
        let m = parse_pgm(&bytes).unwrap();
        assert_eq!(m.dims(), (2, 3, 1));
        assert_eq!(m.get(1, 2, 0), 1.0);
        assert_eq!(m.get(0, 1, 0), 0.2);
        assert!(parse_pgm(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn pgm_directory_labels_follow_sorted_names() {
        let dir = tempfile::tempdir().unwrap();
        for (class, value) in [("b_second", 255u8), ("a_first", 0u8)] {
            let d = dir.path().join(class);
            fs::create_dir(&d).unwrap();
            for i in 0..2 {
                let mut bytes = b"P5 2 2 255 ".to_vec();
                bytes.extend_from_slice(&[value; 4]);
                fs::write(d.join(format!("{i}.pgm")), bytes).unwrap();
            }
            fs::write(d.join("notes.txt"), "ignored").unwrap();
        }
        let ds = load_dataset(dir.path(), None).unwrap();
        assert_eq!(ds.labels.as_deref(), Some(&[0, 0, 1, 1][..]));
        assert_eq!(ds.class_count, Some(2));
        assert_eq!(ds.images[0].get(0, 0, 0), 0.0);
        assert_eq!(ds.images[3].get(0, 0, 0), 1.0);
    }
}
