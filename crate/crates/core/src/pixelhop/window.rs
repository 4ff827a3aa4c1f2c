use ndarray::Array3;

use crate::error::{Error, Result};
use crate::tensor::{PatchMatrix, ResponseMap};

/// Valid-mode sliding windows, scanned row-major. Each row is one
/// `window × window × C` patch flattened in `(row, column, channel)` order.
pub fn extract_patches(input: &ResponseMap, window: usize, stride: usize) -> Result<PatchMatrix> {
    let (h, w, c) = input.dims();
    if stride == 0 {
        return Err(Error::Config("stride must be positive".into()));
    }
    if window == 0 || window > h.min(w) {
        return Err(Error::WindowExceedsInput);
    }
    let out_h = (h - window) / stride + 1;
    let out_w = (w - window) / stride + 1;
    let dim = window * window * c;
    let src = input.as_slice();
    let line = window * c;
    let mut data = Vec::with_capacity(out_h * out_w * dim);
    for i in 0..out_h {
        for j in 0..out_w {
            let (r0, c0) = (i * stride, j * stride);
            for r in r0..r0 + window {
                let start = (r * w + c0) * c;
                data.extend_from_slice(&src[start..start + line]);
            }
        }
    }
    PatchMatrix::from_vec(out_h * out_w, dim, data)
}

/// Non-overlapping `pool × pool` max pooling per channel. Trailing rows and
/// columns that do not fill a window are dropped.
pub fn max_pool(input: &ResponseMap, pool: usize) -> Result<ResponseMap> {
    if pool == 0 {
        return Err(Error::Config("pool must be positive".into()));
    }
    if pool == 1 {
        return Ok(input.clone());
    }
    let (h, w, c) = input.dims();
    let (out_h, out_w) = (h / pool, w / pool);
    if out_h == 0 || out_w == 0 {
        return Err(Error::InputTooSmallToPool);
    }
    let src = input.view();
    let out = Array3::from_shape_fn((out_h, out_w, c), |(i, j, ch)| {
        let mut best = f64::NEG_INFINITY;
        for r in i * pool..(i + 1) * pool {
            for col in j * pool..(j + 1) * pool {
                best = best.max(src[[r, col, ch]]);
            }
        }
        best
    });
    ResponseMap::from_array(out)
}
