//! The Saab transform: a constant mean-filter (DC) kernel followed by
//! principal components of the DC-removed residuals (AC kernels).
//!
//! Channel index 0 is always DC; index `k ≥ 1` is AC kernel `k − 1`.

use ndarray::{s, Array1, Array2};

use crate::error::{shape, Error, Result};
use crate::tensor::{canonicalize_sign, covariance_mapped, sym_eig, PatchMatrix};

/// Eigenvalues at or below this fraction of the largest residual eigenvalue
/// are treated as zero and their kernels dropped.
pub const RANK_EPSILON: f64 = 1e-9;

/// A fitted Saab transform.
#[derive(Debug, Clone, PartialEq)]
pub struct SaabKernels {
    dim: usize,
    dc_kernel: Array1<f64>,
    /// One AC kernel per row.
    ac_kernels: Array2<f64>,
    residual_mean: Array1<f64>,
    energies: Array1<f64>,
}

impl SaabKernels {
    /// Reassembles kernels from stored parts, checking shapes only.
    pub fn from_parts(
        dc_kernel: Array1<f64>,
        ac_kernels: Array2<f64>,
        residual_mean: Array1<f64>,
        energies: Array1<f64>,
    ) -> Result<Self> {
        let dim = dc_kernel.len();
        if dim == 0 {
            return Err(Error::EmptyPatch);
        }
        if ac_kernels.ncols() != dim || residual_mean.len() != dim {
            return Err(shape("saab kernel parts disagree on dimension"));
        }
        if energies.len() != 1 + ac_kernels.nrows() {
            return Err(shape("one energy per kernel expected"));
        }
        Ok(Self {
            dim,
            dc_kernel,
            ac_kernels,
            residual_mean,
            energies,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dc_kernel(&self) -> &Array1<f64> {
        &self.dc_kernel
    }

    pub fn ac_kernels(&self) -> &Array2<f64> {
        &self.ac_kernels
    }

    pub fn residual_mean(&self) -> &Array1<f64> {
        &self.residual_mean
    }

    /// Variance of the training patches along each kernel, DC first.
    pub fn energies(&self) -> &Array1<f64> {
        &self.energies
    }

    /// DC plus AC.
    pub fn kernel_count(&self) -> usize {
        self.energies.len()
    }

    pub fn total_energy(&self) -> f64 {
        self.energies.sum()
    }
}

/// Fits DC and AC kernels on a set of training patches.
pub fn fit_saab(patches: &PatchMatrix) -> Result<SaabKernels> {
    let d = patches.dim();
    let dc_value = 1.0 / (d as f64).sqrt();
    let dc_kernel = Array1::from_elem(d, dc_value);

    // Joint statistics of [x·dc, residual] in a single pair of passes.
    let (mean, cov) = covariance_mapped(patches, d + 1, |x, out| {
        let dc: f64 = x.iter().sum::<f64>() * dc_value;
        out[0] = dc;
        for (o, v) in out[1..].iter_mut().zip(x) {
            *o = v - dc * dc_value;
        }
    })?;
    let dc_energy = cov[[0, 0]].max(0.0);
    let residual_mean = mean.slice(s![1..]).to_owned();
    let residual_cov = cov.slice(s![1.., 1..]).to_owned();

    let eig = sym_eig(&residual_cov)?;
    let largest = eig.eigenvalues[0];
    let cutoff = RANK_EPSILON * if largest > 0.0 { largest } else { 1.0 };
    let retained: Vec<usize> = (0..d)
        .filter(|&k| eig.eigenvalues[k] > cutoff)
        .take(d.saturating_sub(1))
        .collect();

    let mut ac_kernels = Array2::zeros((retained.len(), d));
    let mut energies = Vec::with_capacity(1 + retained.len());
    energies.push(dc_energy);
    let mut v = vec![0.0; d];
    for (row, &k) in retained.iter().enumerate() {
        for (i, x) in v.iter_mut().enumerate() {
            *x = eig.eigenvectors[[i, k]];
        }
        // Remove the roundoff-level DC component, then renormalize.
        let along_dc: f64 = v.iter().sum::<f64>() * dc_value;
        for x in v.iter_mut() {
            *x -= along_dc * dc_value;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= norm;
        }
        canonicalize_sign(&mut v);
        ac_kernels.row_mut(row).assign(&Array1::from(v.clone()));
        energies.push(eig.eigenvalues[k]);
    }

    SaabKernels::from_parts(dc_kernel, ac_kernels, residual_mean, Array1::from(energies))
}

/// Projects patches onto the selected channels, in the order given.
///
/// DC responses are `x·dc`; AC responses are `ac·(x − residual_mean)`.
pub fn apply_saab(
    patches: &PatchMatrix,
    kernels: &SaabKernels,
    keep: &[usize],
) -> Result<Array2<f64>> {
    if patches.dim() != kernels.dim {
        return Err(shape(format!(
            "patches of dim {} for kernels of dim {}",
            patches.dim(),
            kernels.dim
        )));
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= kernels.kernel_count()) {
        return Err(Error::UnknownChannel(bad));
    }
    let n = patches.n_patches();
    let d = kernels.dim;
    let dc = kernels.dc_kernel.as_slice().expect("contiguous");
    let rmean = kernels.residual_mean.as_slice().expect("contiguous");
    let mut out = Array2::zeros((n, keep.len()));
    let mut centered = vec![0.0; d];
    for i in 0..n {
        let x = patches.row(i);
        for ((c, xi), m) in centered.iter_mut().zip(x).zip(rmean) {
            *c = xi - m;
        }
        for (j, &k) in keep.iter().enumerate() {
            out[[i, j]] = if k == 0 {
                dot(x, dc)
            } else {
                dot(&centered, kernels.ac_kernels.row(k - 1).as_slice().expect("contiguous"))
            };
        }
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Each kernel's share of the unit's total energy.
pub fn energy_ratios(kernels: &SaabKernels) -> Result<Array1<f64>> {
    let total = kernels.total_energy();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::DegenerateUnit);
    }
    Ok(kernels.energies.mapv(|e| e / total))
}
