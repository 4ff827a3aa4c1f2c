//! Independent oracles and fixtures shared by the integration tests.
//!
//! Nothing here calls the library's covariance, eigensolver or solver code:
//! covariances are accumulated in plain input order, eigenpairs come from
//! nalgebra, and least squares is solved by Gaussian elimination on the
//! uncentered augmented system.

#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sslhop::pixelhop::{extract_patches, max_pool, ChannelStatus, HopTree};
use sslhop::saab::apply_saab;
use sslhop::tensor::{PatchMatrix, ResponseMap};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    let v: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// Rows drawn from a correlated Gaussian with a geometric spectrum plus an
/// offset, so kernels are well separated but energies span orders of
/// magnitude.
pub fn random_patches(rng: &mut ChaCha8Rng, n: usize, d: usize) -> PatchMatrix {
    let mix: Vec<f64> = (0..d * d).map(|_| normal(rng)).collect();
    let offset: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let z: Vec<f64> = (0..d).map(|k| normal(rng) * 0.7f64.powi(k as i32)).collect();
        for i in 0..d {
            let v: f64 = (0..d).map(|k| mix[i * d + k] * z[k]).sum();
            data.push(v + offset[i]);
        }
    }
    PatchMatrix::from_vec(n, d, data).unwrap()
}

/// Smooth-ish random images: a few random blobs plus noise, values in [0, 1].
pub fn random_images(rng: &mut ChaCha8Rng, count: usize, h: usize, w: usize, c: usize) -> Vec<ResponseMap> {
    (0..count)
        .map(|_| {
            let blobs: Vec<(f64, f64, f64, f64)> = (0..3)
                .map(|_| {
                    (
                        rng.random_range(0.0..h as f64),
                        rng.random_range(0.0..w as f64),
                        rng.random_range(1.0..(h as f64 / 2.0).max(1.5)),
                        rng.random_range(0.2..1.0),
                    )
                })
                .collect();
            let mut data = Vec::with_capacity(h * w * c);
            for r in 0..h {
                for col in 0..w {
                    for ch in 0..c {
                        let mut v = 0.0;
                        for &(br, bc, rad, amp) in &blobs {
                            let d2 = (r as f64 - br).powi(2) + (col as f64 - bc).powi(2);
                            v += amp * (-d2 / (rad * rad)).exp() * (1.0 + 0.3 * ch as f64);
                        }
                        v += 0.05 * rng.random_range(0.0..1.0);
                        data.push(v.min(1.0));
                    }
                }
            }
            ResponseMap::new(h, w, c, data).unwrap()
        })
        .collect()
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

/// Covariance in natural row order, n − 1 normalization.
pub fn naive_covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]);
            }
        }
    }
    for row in &mut cov {
        for v in row.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    cov
}

pub fn patch_rows(p: &PatchMatrix) -> Vec<Vec<f64>> {
    (0..p.n_patches()).map(|i| p.row(i).to_vec()).collect()
}

/// Descending eigenpairs from nalgebra; eigenvector k in `vectors[k]`.
pub fn reference_eig(m: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = m.len();
    let mat = DMatrix::from_fn(d, d, |i, j| m[i][j]);
    let eig = SymmetricEigen::new(mat);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = idx.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = idx
        .iter()
        .map(|&k| (0..d).map(|i| eig.eigenvectors[(i, k)]).collect())
        .collect();
    (values, vectors)
}

pub struct OracleSaab {
    pub dc_energy: f64,
    /// Residual covariance eigenvalues, descending, all of them.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    /// Trace of the raw patch covariance.
    pub total_variance: f64,
}

impl OracleSaab {
    /// Eigenvalues the library should keep (above 1e-9 × largest).
    pub fn retained(&self) -> usize {
        let largest = self.eigenvalues[0];
        let cutoff = 1e-9 * if largest > 0.0 { largest } else { 1.0 };
        self.eigenvalues.iter().filter(|&&e| e > cutoff).count().min(self.eigenvalues.len().saturating_sub(1))
    }

    pub fn dropped_sum(&self) -> f64 {
        self.eigenvalues[self.retained()..].iter().map(|e| e.max(0.0)).sum()
    }
}

/// Saab statistics from explicit residuals and a reference eigensolver.
pub fn oracle_saab(p: &PatchMatrix) -> OracleSaab {
    let rows = patch_rows(p);
    let d = p.dim();
    let dc = 1.0 / (d as f64).sqrt();
    let dc_resp: Vec<f64> = rows.iter().map(|r| r.iter().map(|x| x * dc).sum()).collect();
    let residuals: Vec<Vec<f64>> = rows
        .iter()
        .zip(&dc_resp)
        .map(|(r, s)| r.iter().map(|x| x - s * dc).collect())
        .collect();
    let (eigenvalues, eigenvectors) = reference_eig(&naive_covariance(&residuals));
    let full = naive_covariance(&rows);
    OracleSaab {
        dc_energy: sample_variance(&dc_resp),
        eigenvalues,
        eigenvectors,
        total_variance: (0..d).map(|i| full[i][i]).sum(),
    }
}

/// Gaussian elimination with partial pivoting; `b` has one column per rhs.
pub fn solve_gauss(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            let pivot_row = a[col].clone();
            for (dst, src) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                *dst -= f * src;
            }
            for c in 0..b[r].len() {
                b[r][c] -= f * b[col][c];
            }
        }
    }
    let k = b[0].len();
    let mut x = vec![vec![0.0; k]; n];
    for r in (0..n).rev() {
        for c in 0..k {
            let s: f64 = ((r + 1)..n).map(|j| a[r][j] * x[j][c]).sum();
            x[r][c] = (b[r][c] - s) / a[r][r];
        }
    }
    x
}

/// Ridge LLSR through the uncentered augmented system `[X 1]`, penalizing
/// only the weights. Returns `(weights K × D, intercept K)`.
pub fn oracle_llsr(x: &Array2<f64>, labels: &[usize], k: usize, ridge: f64) -> (Array2<f64>, Array1<f64>) {
    let (n, d) = x.dim();
    let z = |i: usize, j: usize| if j < d { x[[i, j]] } else { 1.0 };
    let mut a = vec![vec![0.0; d + 1]; d + 1];
    let mut b = vec![vec![0.0; k]; d + 1];
    for i in 0..n {
        for (p, row) in a.iter_mut().enumerate() {
            for (q, cell) in row.iter_mut().enumerate() {
                *cell += z(i, p) * z(i, q);
            }
            b[p][labels[i]] += z(i, p);
        }
    }
    for (p, row) in a.iter_mut().enumerate().take(d) {
        row[p] += ridge;
    }
    let theta = solve_gauss(a, b);
    let weights = Array2::from_shape_fn((k, d), |(c, j)| theta[j][c]);
    let intercept = Array1::from_shape_fn(k, |c| theta[d][c]);
    (weights, intercept)
}

/// Rebuilds every unit's training inputs by replaying the tree with the
/// library's projection and pooling primitives. Indexed by unit id, then image.
pub fn replay_unit_inputs(tree: &HopTree, images: &[ResponseMap]) -> Vec<Vec<ResponseMap>> {
    let config = tree.config();
    let mut inputs: Vec<Vec<ResponseMap>> = vec![Vec::new(); tree.units().len()];
    inputs[0] = images.to_vec();
    for unit in tree.units() {
        let (h, w, _) = unit.input_dims;
        let out_h = (h - config.window) / config.stride + 1;
        let out_w = (w - config.window) / config.stride + 1;
        for ch in tree.unit_channels(unit.id) {
            let Some(child) = ch.child_unit else { continue };
            assert_eq!(ch.status, ChannelStatus::Intermediate);
            let maps: Vec<ResponseMap> = inputs[unit.id]
                .iter()
                .map(|im| {
                    let p = extract_patches(im, config.window, config.stride).unwrap();
                    let resp = apply_saab(&p, &unit.kernels, &[ch.kernel_index]).unwrap();
                    let map = ResponseMap::new(out_h, out_w, 1, resp.into_raw_vec_and_offset().0).unwrap();
                    max_pool(&map, config.pool).unwrap()
                })
                .collect();
            inputs[child] = maps;
        }
    }
    inputs
}

/// All training patches of one unit, gathered across images in order.
pub fn unit_patches(inputs: &[ResponseMap], window: usize, stride: usize) -> PatchMatrix {
    let per: Vec<PatchMatrix> = inputs.iter().map(|im| extract_patches(im, window, stride).unwrap()).collect();
    let d = per[0].dim();
    let n: usize = per.iter().map(|p| p.n_patches()).sum();
    let data: Vec<f64> = per.iter().flat_map(|p| p.rows().iter().copied().collect::<Vec<_>>()).collect();
    PatchMatrix::from_vec(n, d, data).unwrap()
}

/// Product of local ratios along the root path, recomputed from the tree's
/// parent links.
pub fn telescoped_ratio(tree: &HopTree, unit: usize, kernel: usize) -> f64 {
    let mut ratio = tree.unit_channels(unit)[kernel].local_ratio;
    let mut current = unit;
    while let Some(parent) = tree.units()[current].parent {
        ratio *= tree.unit_channels(parent.unit)[parent.kernel].local_ratio;
        current = parent.unit;
    }
    ratio
}
