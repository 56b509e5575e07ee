use serde::{Deserialize, Serialize};

use super::{combine, Grfn, GrfnError, Interval};

/// Tolerance on `Σ π_c = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// A finite mixture of GRFNs, `Σ_c π_c Ñ(μ_c, σ²_c, h_c)`.
///
/// Belief and plausibility of a mixture are the weight-averages of the
/// component measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureGrfn {
    weights: Vec<f64>,
    components: Vec<Grfn>,
}

impl MixtureGrfn {
    pub fn new(weights: Vec<f64>, components: Vec<Grfn>) -> Result<Self, GrfnError> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(GrfnError::InvalidMixture(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(GrfnError::InvalidMixture("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(GrfnError::InvalidMixture(format!("weights sum to {total}")));
        }
        Ok(Self { weights, components })
    }

    pub fn single(component: Grfn) -> Self {
        Self { weights: vec![1.0], components: vec![component] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Grfn] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    fn weighted(&self, f: impl Fn(&Grfn) -> f64) -> f64 {
        self.weights.iter().zip(&self.components).map(|(w, g)| w * f(g)).sum()
    }

    pub fn bel(&self, iv: &Interval) -> f64 {
        self.weighted(|g| g.bel(iv))
    }

    pub fn pl(&self, iv: &Interval) -> f64 {
        self.weighted(|g| g.pl(iv))
    }

    pub fn bel_halfline(&self, x: f64) -> f64 {
        self.weighted(|g| g.bel_halfline(x))
    }

    pub fn pl_halfline(&self, x: f64) -> f64 {
        self.weighted(|g| g.pl_halfline(x))
    }

    /// Pools the components into one GRFN by product–intersection with each
    /// component discounted by its mixture weight.
    pub fn summarize(&self) -> Result<Grfn, GrfnError> {
        let items: Vec<(f64, Grfn)> =
            self.weights.iter().copied().zip(self.components.iter().copied()).collect();
        combine(&items)
    }

    /// Same mixture with components (and weights) reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            weights: order.iter().map(|&i| self.weights[i]).collect(),
            components: order.iter().map(|&i| self.components[i]).collect(),
        }
    }
}
