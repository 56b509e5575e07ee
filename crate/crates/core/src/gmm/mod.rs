//! Per-slide Gaussian mixture embedding.
//!
//! Shared patch prototypes (k-means centroids over pooled patches) seed a
//! diagonal-covariance EM fit on every slide. The fitted weights, means and
//! variances form the slide embedding; the per-patch argmax responsibility is
//! the assignment map.

mod em;
mod kmeans;

pub use em::{assignment_map, em_fit, log_likelihood, EmFit, EmOptions, VARIANCE_FLOOR};
pub use kmeans::{fit_patch_prototypes, weighted_kmeans, KMeansFit};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grfn::WEIGHT_SUM_TOLERANCE;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GmmError {
    #[error("invalid patch matrix: {0}")]
    InvalidMatrix(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot fit {clusters} clusters to {points} points")]
    TooFewPoints { points: usize, clusters: usize },
    #[error("EM numerical failure at iteration {iteration}: {detail}")]
    NumericalFailure { iteration: usize, detail: String },
    #[error("invalid mixture parameters: {0}")]
    InvalidParams(String),
}

/// Patch embeddings of one slide, `n_patches × dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    n_patches: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PatchMatrix {
    pub fn new(n_patches: usize, dim: usize, data: Vec<f64>) -> Result<Self, GmmError> {
        if n_patches == 0 || dim == 0 {
            return Err(GmmError::InvalidMatrix(format!("shape {n_patches}x{dim} is empty")));
        }
        if data.len() != n_patches * dim {
            return Err(GmmError::InvalidMatrix(format!(
                "{} values for shape {n_patches}x{dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(GmmError::InvalidMatrix(format!(
                "non-finite entry at row {}, column {}",
                i / dim,
                i % dim
            )));
        }
        Ok(Self { n_patches, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GmmError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(GmmError::DimensionMismatch { expected: dim, found: bad.len() });
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn n_patches(&self) -> usize {
        self.n_patches
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Per-dimension population mean and variance.
    pub fn column_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_patches as f64;
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.dim];
        for row in self.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n);
        (mean, var)
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self, GmmError> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.dim, data)
    }

    /// Row-wise concatenation of several matrices sharing a dimension.
    pub fn stack<'a>(parts: impl IntoIterator<Item = &'a PatchMatrix>) -> Result<Self, GmmError> {
        let mut dim = None;
        let mut n = 0;
        let mut data = Vec::new();
        for p in parts {
            match dim {
                None => dim = Some(p.dim),
                Some(d) if d != p.dim => {
                    return Err(GmmError::DimensionMismatch { expected: d, found: p.dim })
                }
                _ => {}
            }
            n += p.n_patches;
            data.extend_from_slice(&p.data);
        }
        Self::new(n, dim.unwrap_or(0), data)
    }
}

/// Shared patch prototypes `h_1..h_C` used to seed every slide's EM fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchPrototypes {
    means: Vec<Vec<f64>>,
}

impl PatchPrototypes {
    pub fn new(means: Vec<Vec<f64>>) -> Result<Self, GmmError> {
        let dim = means.first().map_or(0, Vec::len);
        if means.is_empty() || dim == 0 {
            return Err(GmmError::InvalidParams("patch prototypes must be non-empty".into()));
        }
        for m in &means {
            if m.len() != dim {
                return Err(GmmError::DimensionMismatch { expected: dim, found: m.len() });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(GmmError::InvalidParams("non-finite prototype".into()));
            }
        }
        Ok(Self { means })
    }

    pub fn count(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }
}

/// Diagonal Gaussian mixture parameters of one slide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GmmParams {
    pub fn count(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), GmmError> {
        let c = self.weights.len();
        if c == 0 || self.means.len() != c || self.variances.len() != c {
            return Err(GmmError::InvalidParams("component counts disagree".into()));
        }
        let d = self.dim();
        if self.means.iter().chain(&self.variances).any(|v| v.len() != d) || d == 0 {
            return Err(GmmError::InvalidParams("component dimensions disagree".into()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || (self.weights.iter().sum::<f64>() - 1.0).abs() > WEIGHT_SUM_TOLERANCE
        {
            return Err(GmmError::InvalidParams("weights are not on the simplex".into()));
        }
        if self.means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GmmError::InvalidParams("non-finite mean".into()));
        }
        if self.variances.iter().flatten().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(GmmError::InvalidParams("variances must be positive".into()));
        }
        Ok(())
    }
}

/// One component of a slide embedding: `[π̂_c, μ̂_c, diag Σ̂_c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentEmbedding {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub var_diag: Vec<f64>,
}

impl ComponentEmbedding {
    /// Flattened `(weight, mean..., variance...)`, length `2d + 1`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(1 + self.mean.len() + self.var_diag.len());
        z.push(self.weight);
        z.extend_from_slice(&self.mean);
        z.extend_from_slice(&self.var_diag);
        z
    }
}

/// Slide representation in `R^{C × (2d+1)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideEmbedding {
    pub components: Vec<ComponentEmbedding>,
}

impl SlideEmbedding {
    pub fn from_params(params: &GmmParams) -> Self {
        let components = params
            .weights
            .iter()
            .zip(&params.means)
            .zip(&params.variances)
            .map(|((&weight, mean), var)| ComponentEmbedding {
                weight,
                mean: mean.clone(),
                var_diag: var.clone(),
            })
            .collect();
        Self { components }
    }

    pub fn to_params(&self) -> GmmParams {
        GmmParams {
            weights: self.components.iter().map(|c| c.weight).collect(),
            means: self.components.iter().map(|c| c.mean.clone()).collect(),
            variances: self.components.iter().map(|c| c.var_diag.clone()).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.components.iter().flat_map(ComponentEmbedding::flatten).collect()
    }

    pub fn validate(&self) -> Result<(), GmmError> {
        self.to_params().validate()
    }
}

/// Lossless repackaging of fitted parameters as a slide embedding.
pub fn slide_embedding(params: &GmmParams) -> SlideEmbedding {
    SlideEmbedding::from_params(params)
}

/// Per-patch component label, `argmax_c π_c N(z; μ_c, Σ_c)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentMap {
    pub labels: Vec<usize>,
}
