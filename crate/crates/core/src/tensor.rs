//! Dense containers and the handful of linear-algebra kernels the pipeline
//! needs: covariance accumulation, a symmetric eigensolver, projection onto a
//! basis and a Cholesky solve for the least-squares head.
//!
//! Everything is `f64` and single-threaded; parallelism lives one level up.

use std::cmp::Ordering;

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};

use crate::error::{shape, Error, Result};

/// A `height × width × channels` array of responses, stored row-major in
/// `(row, column, channel)` order. Images are the special case of raw pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    data: Array3<f64>,
}

impl ResponseMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(shape("response map dimensions must be positive"));
        }
        if data.len() != height * width * channels {
            return Err(shape(format!(
                "{} values for a {height}x{width}x{channels} map",
                data.len()
            )));
        }
        let data = Array3::from_shape_vec((height, width, channels), data)
            .map_err(|e| shape(e.to_string()))?;
        Self::from_array(data)
    }

    pub fn from_array(data: Array3<f64>) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 || c == 0 {
            return Err(shape("response map dimensions must be positive"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            data: data.as_standard_layout().into_owned(),
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn view(&self) -> ArrayView3<'_, f64> {
        self.data.view()
    }

    /// Row-major `(row, column, channel)` values.
    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("standard layout")
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[[row, col, channel]]
    }

    /// Copy of one channel as a single-channel map.
    pub fn channel(&self, channel: usize) -> Result<ResponseMap> {
        if channel >= self.channels() {
            return Err(Error::UnknownChannel(channel));
        }
        let plane = self.data.index_axis(Axis(2), channel).to_owned();
        Ok(Self {
            data: plane.insert_axis(Axis(2)),
        })
    }

    pub fn scaled(&self, factor: f64) -> Result<ResponseMap> {
        Self::from_array(&self.data * factor)
    }

    pub fn into_array(self) -> Array3<f64> {
        self.data
    }
}

/// `n_patches` flattened windows, one per row, each of length `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    rows: Array2<f64>,
}

impl PatchMatrix {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if rows.ncols() == 0 {
            return Err(Error::EmptyPatch);
        }
        Ok(Self {
            rows: rows.as_standard_layout().into_owned(),
        })
    }

    pub fn from_vec(n_patches: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyPatch);
        }
        let rows =
            Array2::from_shape_vec((n_patches, dim), data).map_err(|e| shape(e.to_string()))?;
        Ok(Self { rows })
    }

    pub fn n_patches(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.rows.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    /// Keeps `cap` evenly spaced rows (first row always included). No-op when
    /// the matrix already has at most `cap` rows.
    pub fn subsample(&self, cap: usize) -> PatchMatrix {
        let n = self.n_patches();
        if cap == 0 || n <= cap {
            return self.clone();
        }
        let picked: Vec<usize> = (0..cap).map(|i| i * n / cap).collect();
        Self {
            rows: self.rows.select(Axis(0), &picked),
        }
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.rows
    }
}

/// Column means and the unbiased (`n − 1`) sample covariance of the rows.
pub fn covariance(patches: &PatchMatrix) -> Result<(Array1<f64>, Array2<f64>)> {
    covariance_mapped(patches, patches.dim(), |x, out| out.copy_from_slice(x))
}

/// Covariance of `f(row)` over all rows, without materializing the mapped
/// matrix.
///
/// Rows are visited in lexicographic order of their raw values, so the
/// result is bit-identical under any permutation of the input rows.
pub(crate) fn covariance_mapped<F>(
    patches: &PatchMatrix,
    out_dim: usize,
    map: F,
) -> Result<(Array1<f64>, Array2<f64>)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = patches.n_patches();
    if n < 2 {
        return Err(Error::InsufficientSamples);
    }
    if patches.rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lex_cmp(patches.row(a), patches.row(b)));

    let d = out_dim;
    let mut buf = vec![0.0; d];
    let mut mean = vec![0.0; d];
    for &i in &order {
        map(patches.row(i), &mut buf);
        for (m, v) in mean.iter_mut().zip(&buf) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Upper triangle, row-major.
    let mut acc = vec![0.0; d * d];
    for &i in &order {
        map(patches.row(i), &mut buf);
        for (b, m) in buf.iter_mut().zip(&mean) {
            *b -= m;
        }
        for a in 0..d {
            let xa = buf[a];
            if xa == 0.0 {
                continue;
            }
            let row = &mut acc[a * d..(a + 1) * d];
            for b in a..d {
                row[b] += xa * buf[b];
            }
        }
    }

    let denom = (n - 1) as f64;
    let mut cov = Array2::zeros((d, d));
    for a in 0..d {
        for b in a..d {
            let v = acc[a * d + b] / denom;
            cov[[a, b]] = v;
            cov[[b, a]] = v;
        }
    }
    Ok((Array1::from(mean), cov))
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

/// Eigenpairs of a symmetric matrix, eigenvalues in non-increasing order and
/// eigenvector `k` stored in column `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigResult {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

const SYMMETRY_TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 100;
/// Relative tolerance under which two magnitudes count as tied for the sign
/// convention.
const SIGN_TIE_TOL: f64 = 1e-9;

/// Cyclic Jacobi eigendecomposition.
///
/// Each eigenvector is normalized so that its largest-magnitude component is
/// nonnegative (lowest index among near-ties).
pub fn sym_eig(matrix: &Array2<f64>) -> Result<SymEigResult> {
    let (d, d2) = matrix.dim();
    if d != d2 {
        return Err(shape(format!("{d}x{d2} matrix is not square")));
    }
    if d == 0 {
        return Err(shape("empty matrix"));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let (x, y) = (matrix[[i, j]], matrix[[j, i]]);
            if (x - y).abs() > SYMMETRY_TOL {
                return Err(Error::NotSymmetric);
            }
            a[i * d + j] = 0.5 * (x + y);
        }
    }
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }

    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..d)
            .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
            .map(|(i, j)| a[i * d + j] * a[i * d + j])
            .sum::<f64>()
            .sqrt();
        if off == 0.0 || off <= 1e-15 * frob {
            converged = true;
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                rotate(&mut a, &mut v, d, p, q);
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence);
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| a[y * d + y].total_cmp(&a[x * d + x]));

    let eigenvalues = Array1::from_iter(order.iter().map(|&k| a[k * d + k]));
    let mut eigenvectors = Array2::zeros((d, d));
    let mut col = vec![0.0; d];
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..d {
            col[i] = v[i * d + src];
        }
        canonicalize_sign(&mut col);
        for i in 0..d {
            eigenvectors[[i, dst]] = col[i];
        }
    }
    Ok(SymEigResult {
        eigenvalues,
        eigenvectors,
    })
}

fn rotate(a: &mut [f64], v: &mut [f64], d: usize, p: usize, q: usize) {
    let apq = a[p * d + q];
    if apq == 0.0 {
        return;
    }
    let app = a[p * d + p];
    let aqq = a[q * d + q];
    let theta = 0.5 * (aqq - app) / apq;
    let mut t = 1.0 / (theta.abs() + (theta * theta + 1.0).sqrt());
    if theta < 0.0 {
        t = -t;
    }
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    a[p * d + p] = app - t * apq;
    a[q * d + q] = aqq + t * apq;
    a[p * d + q] = 0.0;
    a[q * d + p] = 0.0;
    for j in 0..d {
        if j == p || j == q {
            continue;
        }
        let g = a[j * d + p];
        let h = a[j * d + q];
        let np = g - s * (h + g * tau);
        let nq = h + s * (g - h * tau);
        a[j * d + p] = np;
        a[p * d + j] = np;
        a[j * d + q] = nq;
        a[q * d + j] = nq;
    }
    for j in 0..d {
        let g = v[j * d + p];
        let h = v[j * d + q];
        v[j * d + p] = g - s * (h + g * tau);
        v[j * d + q] = h + s * (g - h * tau);
    }
}

/// Flips `v` so its largest-magnitude component is nonnegative.
pub(crate) fn canonicalize_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return;
    }
    let lead = v
        .iter()
        .position(|x| x.abs() >= max * (1.0 - SIGN_TIE_TOL))
        .expect("max is attained");
    if v[lead] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// `out[i][j] = basis_j · (x_i − offset)` for a `k × dim` basis.
pub fn project(
    patches: &PatchMatrix,
    basis: ArrayView2<'_, f64>,
    offset: ArrayView1<'_, f64>,
) -> Result<Array2<f64>> {
    let dim = patches.dim();
    if basis.ncols() != dim || offset.len() != dim {
        return Err(shape(format!(
            "basis has {} columns and offset {} entries for patches of dim {dim}",
            basis.ncols(),
            offset.len()
        )));
    }
    let k = basis.nrows();
    let n = patches.n_patches();
    let mut out = Array2::zeros((n, k));
    let mut centered = vec![0.0; dim];
    for i in 0..n {
        for ((c, x), o) in centered.iter_mut().zip(patches.row(i)).zip(offset.iter()) {
            *c = x - o;
        }
        for j in 0..k {
            out[[i, j]] = basis
                .row(j)
                .iter()
                .zip(&centered)
                .map(|(b, c)| b * c)
                .sum();
        }
    }
    Ok(out)
}

/// Solves `A X = B` for symmetric positive definite `A`.
///
/// A pivot at or below `1e-12 × max diag(A)` is reported as a singular system.
pub fn cholesky_solve(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let d = a.nrows();
    if a.ncols() != d || b.nrows() != d {
        return Err(shape("cholesky system dimensions disagree"));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let scale = (0..d).fold(0.0f64, |m, i| m.max(a[[i, i]].abs()));
    let floor = 1e-12 * scale.max(f64::MIN_POSITIVE);

    // Lower factor, row-major: row i holds L[i][0..=i].
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let (li, lj) = (&l[i * d..i * d + j], &l[j * d..j * d + j]);
            let s = a[[i, j]] - li.iter().zip(lj).map(|(x, y)| x * y).sum::<f64>();
            if i == j {
                if s.is_nan() || s <= floor {
                    return Err(Error::SingularSystem);
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }

    let k = b.ncols();
    let mut x = b.t().as_standard_layout().into_owned(); // k × d
    for col in 0..k {
        let xs = x.row_mut(col).into_slice().expect("standard layout");
        for i in 0..d {
            let s: f64 = l[i * d..i * d + i].iter().zip(&xs[..i]).map(|(a, b)| a * b).sum();
            xs[i] = (xs[i] - s) / l[i * d + i];
        }
        for i in (0..d).rev() {
            let mut s = xs[i];
            for r in (i + 1)..d {
                s -= l[r * d + i] * xs[r];
            }
            xs[i] = s / l[i * d + i];
        }
    }
    Ok(x.t().to_owned())
}
