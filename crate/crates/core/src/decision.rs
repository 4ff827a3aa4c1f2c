//! Linear least-squares regression onto one-hot class targets.
//!
//! Scores are the raw regression outputs (no softmax, no clipping); the
//! predicted class is the arg-max, lowest index on ties.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{shape, Error, Result};
use crate::tensor::cholesky_solve;

/// Per-dimension variance floor used by [`Standardizer`].
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LLSRModel {
    /// `K × D`.
    weights: Array2<f64>,
    intercept: Array1<f64>,
    ridge: f64,
}

impl LLSRModel {
    pub fn from_parts(weights: Array2<f64>, intercept: Array1<f64>, ridge: f64) -> Result<Self> {
        if weights.nrows() != intercept.len() || weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(shape("weights and intercept disagree"));
        }
        if weights.iter().chain(intercept.iter()).any(|v| !v.is_finite())
            || !(ridge >= 0.0 && ridge.is_finite())
        {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            weights,
            intercept,
            ridge,
        })
    }

    pub fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn intercept(&self) -> &Array1<f64> {
        &self.intercept
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn scores(&self, feature: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if feature.len() != self.n_features() {
            return Err(shape(format!(
                "feature of length {} for a model expecting {}",
                feature.len(),
                self.n_features()
            )));
        }
        Ok(self.weights.dot(&feature) + &self.intercept)
    }
}

/// Fits `min ‖Y − (X Wᵀ + b)‖² + λ‖W‖²` through the normal equations of the
/// mean-centered design. The intercept is not penalized.
///
/// With `λ = 0` the centered design must have full column rank, otherwise
/// the system is reported singular.
pub fn fit_llsr(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    n_classes: usize,
    ridge: f64,
) -> Result<LLSRModel> {
    let (n, d) = features.dim();
    if n < 2 {
        return Err(Error::InsufficientSamples);
    }
    if labels.len() != n {
        return Err(Error::LabelCountMismatch);
    }
    if d == 0 || n_classes == 0 {
        return Err(shape("need at least one feature and one class"));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Labels(format!("label {bad} outside [0, {n_classes})")));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Config(format!("ridge must be a finite nonnegative number, got {ridge}")));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }

    let x_mean = features.mean_axis(Axis(0)).expect("n >= 2");
    let xc = &features - &x_mean;
    let mut y = Array2::<f64>::zeros((n, n_classes));
    for (i, &l) in labels.iter().enumerate() {
        y[[i, l]] = 1.0;
    }
    let y_mean = y.mean_axis(Axis(0)).expect("n >= 2");
    let yc = &y - &y_mean;

    // Wide designs solve the equivalent N × N system: with λ > 0,
    // (XcᵀXc + λI)⁻¹Xcᵀ = Xcᵀ(XcXcᵀ + λI)⁻¹.
    let coef = if d > n && ridge > 0.0 {
        let mut gram = xc.dot(&xc.t());
        for i in 0..n {
            gram[[i, i]] += ridge;
        }
        xc.t().dot(&cholesky_solve(&gram, &yc)?)
    } else {
        let mut gram = xc.t().dot(&xc);
        for i in 0..d {
            gram[[i, i]] += ridge;
        }
        cholesky_solve(&gram, &xc.t().dot(&yc))?
    }; // D × K
    let weights = coef.t().to_owned();
    let intercept = &y_mean - &weights.dot(&x_mean);
    LLSRModel::from_parts(weights, intercept, ridge)
}

/// Arg-max of `scores`, lowest index among exact ties.
pub fn argmax(scores: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Predicted class and raw score vector for one feature vector.
pub fn predict(model: &LLSRModel, feature: ArrayView1<'_, f64>) -> Result<(usize, Array1<f64>)> {
    let scores = model.scores(feature)?;
    Ok((argmax(scores.view()), scores))
}

/// Per-dimension affine standardization learned from training features.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Array1<f64>,
    scale: Array1<f64>,
}

impl Standardizer {
    /// Sample mean and standard deviation per column, variance floored at
    /// [`VARIANCE_FLOOR`].
    pub fn fit(features: ArrayView2<'_, f64>) -> Result<Self> {
        let n = features.nrows();
        if n < 2 {
            return Err(Error::InsufficientSamples);
        }
        let mean = features.mean_axis(Axis(0)).expect("n >= 2");
        let var = features.var_axis(Axis(0), 1.0);
        let scale = var.mapv(|v| v.max(VARIANCE_FLOOR).sqrt());
        Self::from_parts(mean, scale)
    }

    pub fn from_parts(mean: Array1<f64>, scale: Array1<f64>) -> Result<Self> {
        if mean.len() != scale.len() {
            return Err(shape("standardizer mean and scale disagree"));
        }
        if mean.iter().any(|v| !v.is_finite()) || scale.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::NonFinite);
        }
        Ok(Self { mean, scale })
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn scale(&self) -> &Array1<f64> {
        &self.scale
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.dim() {
            return Err(shape("feature width differs from the standardizer"));
        }
        Ok((&features - &self.mean) / &self.scale)
    }
}

/// Default ridge: `1e-4 · trace(XᵀX) / D`. An all-zero design (constant
/// features after standardization) falls back to `1e-4`, the value unit
/// variance features would give, so degenerate models still fit.
pub fn default_ridge(features: ArrayView2<'_, f64>) -> f64 {
    let d = features.ncols().max(1);
    let trace: f64 = features.iter().map(|v| v * v).sum();
    if trace > 0.0 {
        1e-4 * trace / d as f64
    } else {
        1e-4
    }
}

/// Standardization followed by LLSR: the complete decision head.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub standardizer: Standardizer,
    pub model: LLSRModel,
}

impl Classifier {
    /// Uses [`default_ridge`] on the standardized features when `ridge` is
    /// `None`.
    pub fn fit(
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        n_classes: usize,
        ridge: Option<f64>,
    ) -> Result<Self> {
        let standardizer = Standardizer::fit(features)?;
        let z = standardizer.apply(features)?;
        let ridge = ridge.unwrap_or_else(|| default_ridge(z.view()));
        let model = fit_llsr(z.view(), labels, n_classes, ridge)?;
        Ok(Self {
            standardizer,
            model,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.model.n_classes()
    }

    /// Class and scores for every row of `features`.
    pub fn predict_batch(&self, features: ArrayView2<'_, f64>) -> Result<Vec<(usize, Array1<f64>)>> {
        let z = self.standardizer.apply(features)?;
        z.rows().into_iter().map(|row| predict(&self.model, row)).collect()
    }
}

/// Fraction of matching entries; `None` for empty input.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Option<f64> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return None;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Some(hits as f64 / predicted.len() as f64)
}

/// `K × K` counts, rows indexed by true class and columns by prediction.
pub fn confusion_matrix(predicted: &[usize], truth: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p < n_classes && t < n_classes {
            m[t][p] += 1;
        }
    }
    m
}
