//! Component evidence modeling and the slide-level evidence mixture.
//!
//! Every mixture component `c` of a slide embedding has `K_c` trainable
//! component prototypes. Prototype `k` contributes the GRFN
//! `Ñ(βᵀ z_c + β₀, σ², h)` discounted by the similarity
//! `s = exp(-γ² d_cos(μ̂_c, p))`; the discounted pieces are pooled by the
//! product–intersection rule, and the slide evidence is the mixture of the
//! pooled component GRFNs with weights `π̂_c`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gmm::{ComponentEmbedding, SlideEmbedding};
use crate::grfn::{Grfn, GrfnError, MixtureGrfn};
use crate::special::{ln_softplus, softplus};

/// λ used when none is configured.
pub const DEFAULT_LAMBDA: f64 = 0.1;
/// Location spread below which relative risk is reported as 0.5 everywhere.
pub const RELATIVE_RISK_DEGENERATE_SPREAD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvidenceError {
    #[error("zero-norm vector in cosine similarity")]
    DegenerateEmbedding,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("slide has {slide} components but the bank has {bank}")]
    ComponentCountMismatch { slide: usize, bank: usize },
    #[error("invalid prototype bank: {0}")]
    InvalidBank(String),
    #[error("survival time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error(transparent)]
    Grfn(#[from] GrfnError),
}

/// Trainable evidence carried by one component prototype.
///
/// `σ² = exp(log_var)` and `h = softplus(raw_h)` keep the constrained
/// quantities valid for any real parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentPrototype {
    pub anchor: Vec<f64>,
    /// Regression weights over `(π̂_c, μ̂_c, diag Σ̂_c)`.
    pub coeffs: Vec<f64>,
    pub intercept: f64,
    pub log_var: f64,
    pub raw_h: f64,
    pub gamma: f64,
}

impl ComponentPrototype {
    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn sigma2(&self) -> f64 {
        self.log_var.exp()
    }

    pub fn h(&self) -> f64 {
        softplus(self.raw_h)
    }

    /// Number of unconstrained parameters for embedding dimension `dim`.
    pub fn param_count(dim: usize) -> usize {
        3 * dim + 5
    }

    fn validate(&self, dim: usize) -> Result<(), EvidenceError> {
        if self.anchor.len() != dim {
            return Err(EvidenceError::DimensionMismatch { expected: dim, found: self.anchor.len() });
        }
        if self.coeffs.len() != 2 * dim + 1 {
            return Err(EvidenceError::DimensionMismatch {
                expected: 2 * dim + 1,
                found: self.coeffs.len(),
            });
        }
        let scalars = [self.intercept, self.log_var, self.raw_h, self.gamma];
        if self.anchor.iter().chain(&self.coeffs).chain(&scalars).any(|v| !v.is_finite()) {
            return Err(EvidenceError::InvalidBank("non-finite prototype parameter".into()));
        }
        if self.anchor.iter().all(|v| *v == 0.0) {
            return Err(EvidenceError::InvalidBank("anchor is the zero vector".into()));
        }
        Ok(())
    }
}

/// What a flat parameter index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Anchor,
    Coeff,
    Intercept,
    LogVar,
    RawH,
    Gamma,
}

/// All component prototypes of the model plus the belief/plausibility mix λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    components: Vec<Vec<ComponentPrototype>>,
    lambda_mix: f64,
}

impl PrototypeBank {
    pub fn new(components: Vec<Vec<ComponentPrototype>>, lambda_mix: f64) -> Result<Self, EvidenceError> {
        let bank = Self { components, lambda_mix };
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<(), EvidenceError> {
        if self.components.is_empty() {
            return Err(EvidenceError::InvalidBank("no components".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda_mix) {
            return Err(EvidenceError::InvalidBank(format!("lambda {} outside [0, 1]", self.lambda_mix)));
        }
        let dim = self.components.iter().flatten().next().map_or(0, ComponentPrototype::dim);
        if dim == 0 {
            return Err(EvidenceError::InvalidBank("zero embedding dimension".into()));
        }
        for (c, protos) in self.components.iter().enumerate() {
            if protos.is_empty() {
                return Err(EvidenceError::InvalidBank(format!("component {c} has no prototypes")));
            }
            for p in protos {
                p.validate(dim)?;
            }
        }
        Ok(())
    }

    pub fn components(&self) -> &[Vec<ComponentPrototype>] {
        &self.components
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn prototype_count(&self) -> usize {
        self.components.iter().map(Vec::len).sum()
    }

    pub fn dim(&self) -> usize {
        self.components[0][0].dim()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda_mix
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self, EvidenceError> {
        self.lambda_mix = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn prototypes(&self) -> impl Iterator<Item = &ComponentPrototype> {
        self.components.iter().flatten()
    }

    pub fn param_len(&self) -> usize {
        self.prototype_count() * ComponentPrototype::param_count(self.dim())
    }

    /// Flat parameter vector; each prototype contributes
    /// `anchor, coeffs, intercept, log_var, raw_h, gamma` in that order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        for p in self.prototypes() {
            out.extend_from_slice(&p.anchor);
            out.extend_from_slice(&p.coeffs);
            out.extend_from_slice(&[p.intercept, p.log_var, p.raw_h, p.gamma]);
        }
        out
    }

    /// Inverse of [`PrototypeBank::params`]. Panics if the length is wrong.
    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_len(), "parameter vector length");
        let d = self.dim();
        let mut it = flat.iter().copied();
        for p in self.components.iter_mut().flatten() {
            p.anchor.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
            p.coeffs.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
            p.intercept = it.next().expect("length checked");
            p.log_var = it.next().expect("length checked");
            p.raw_h = it.next().expect("length checked");
            p.gamma = it.next().expect("length checked");
        }
        debug_assert_eq!(d, self.dim());
    }

    /// Kind of every entry of [`PrototypeBank::params`].
    pub fn param_kinds(&self) -> Vec<ParamKind> {
        let d = self.dim();
        let mut one = vec![ParamKind::Anchor; d];
        one.extend(std::iter::repeat_n(ParamKind::Coeff, 2 * d + 1));
        one.extend([ParamKind::Intercept, ParamKind::LogVar, ParamKind::RawH, ParamKind::Gamma]);
        one.iter().copied().cycle().take(self.param_len()).collect()
    }

    /// Same bank with its components reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            components: order.iter().map(|&i| self.components[i].clone()).collect(),
            lambda_mix: self.lambda_mix,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine of the angle between `a` and `b`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EvidenceError> {
    if a.len() != b.len() {
        return Err(EvidenceError::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    let (na, nb) = (norm(a), norm(b));
    if !(na > 0.0 && nb > 0.0) {
        return Err(EvidenceError::DegenerateEmbedding);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine distance `(1 - cos θ)/2 ∈ [0, 1]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, EvidenceError> {
    Ok(0.5 * (1.0 - cosine(a, b)?))
}

/// `s = exp(-γ² d_cos(μ̂_c, p))`.
pub fn similarity(mean_c: &[f64], proto: &ComponentPrototype) -> Result<f64, EvidenceError> {
    Ok((-proto.gamma * proto.gamma * cosine_distance(mean_c, &proto.anchor)?).exp())
}

/// Undiscounted GRFN of one prototype for a flattened component embedding.
pub fn prototype_evidence(z_c: &[f64], proto: &ComponentPrototype) -> Result<Grfn, EvidenceError> {
    if z_c.len() != proto.coeffs.len() {
        return Err(EvidenceError::DimensionMismatch { expected: proto.coeffs.len(), found: z_c.len() });
    }
    let mu = proto.coeffs.iter().zip(z_c).map(|(b, z)| b * z).sum::<f64>() + proto.intercept;
    Ok(Grfn::new(mu, proto.sigma2(), proto.h())?)
}

/// Per-prototype intermediates of one component's evidence, shared with the
/// gradient computation in training.
#[derive(Debug, Clone)]
pub(crate) struct PrototypeTerm {
    pub mu: f64,
    pub sigma2: f64,
    pub dcos: f64,
    /// `s_k h_k / Σ_j s_j h_j`
    pub share: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct ComponentTrace {
    pub grfn: Grfn,
    pub z: Vec<f64>,
    pub terms: Vec<PrototypeTerm>,
}

/// Product–intersection pooling carried out on log-weights, so that
/// similarity underflow only drives `h` towards zero.
pub(crate) fn component_forward(
    embedding_c: &ComponentEmbedding,
    protos: &[ComponentPrototype],
) -> Result<ComponentTrace, EvidenceError> {
    if protos.is_empty() {
        return Err(GrfnError::VacuousCombination.into());
    }
    let z = embedding_c.flatten();
    let mut terms = Vec::with_capacity(protos.len());
    let mut log_w = Vec::with_capacity(protos.len());
    for p in protos {
        let g = prototype_evidence(&z, p)?;
        let dcos = cosine_distance(&embedding_c.mean, &p.anchor)?;
        log_w.push(-p.gamma * p.gamma * dcos + ln_softplus(p.raw_h));
        terms.push(PrototypeTerm { mu: g.mu(), sigma2: g.sigma2(), dcos, share: 0.0 });
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(GrfnError::VacuousCombination.into());
    }
    let scaled: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = scaled.iter().sum();
    let (mut mu, mut sigma2) = (0.0, 0.0);
    for (t, w) in terms.iter_mut().zip(&scaled) {
        t.share = w / total;
        mu += t.share * t.mu;
        sigma2 += t.share * t.share * t.sigma2;
    }
    let h = total * max.exp();
    Ok(ComponentTrace { grfn: Grfn::new(mu, sigma2, h)?, z, terms })
}

/// Pooled evidence `Ñ(μ_c, σ²_c, h_c)` of one mixture component.
pub fn component_evidence(
    embedding_c: &ComponentEmbedding,
    protos: &[ComponentPrototype],
) -> Result<Grfn, EvidenceError> {
    Ok(component_forward(embedding_c, protos)?.grfn)
}

fn check_counts(emb: &SlideEmbedding, bank: &PrototypeBank) -> Result<(), EvidenceError> {
    if emb.count() != bank.component_count() {
        return Err(EvidenceError::ComponentCountMismatch { slide: emb.count(), bank: bank.component_count() });
    }
    if emb.dim() != bank.dim() {
        return Err(EvidenceError::DimensionMismatch { expected: bank.dim(), found: emb.dim() });
    }
    Ok(())
}

pub(crate) fn slide_forward(
    emb: &SlideEmbedding,
    bank: &PrototypeBank,
) -> Result<Vec<ComponentTrace>, EvidenceError> {
    check_counts(emb, bank)?;
    emb.components
        .iter()
        .zip(bank.components())
        .map(|(c, protos)| component_forward(c, protos))
        .collect()
}

/// Slide-level mixture GRFN with weights `π̂_c`.
pub fn slide_evidence(emb: &SlideEmbedding, bank: &PrototypeBank) -> Result<MixtureGrfn, EvidenceError> {
    let traces = slide_forward(emb, bank)?;
    let weights = emb.weights();
    Ok(MixtureGrfn::new(weights, traces.into_iter().map(|t| t.grfn).collect())?)
}

/// `S(t) = λ Bel([log t, ∞)) + (1 - λ) Pl([log t, ∞))`.
pub fn survival_function(m: &MixtureGrfn, t: f64, lambda: f64) -> Result<f64, EvidenceError> {
    if !(t > 0.0) {
        return Err(EvidenceError::NonPositiveTime(t));
    }
    let x = t.ln();
    Ok(lambda * m.bel_halfline(x) + (1.0 - lambda) * m.pl_halfline(x))
}

/// Most plausible survival time `exp(μ)`.
pub fn pst(g: &Grfn) -> f64 {
    g.mu().exp()
}

/// Component-wise relative risk `1 - (μ_c - min μ)/(max μ - min μ)`.
pub fn relative_risk(m: &MixtureGrfn) -> Vec<f64> {
    let mus: Vec<f64> = m.components().iter().map(Grfn::mu).collect();
    let lo = mus.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < RELATIVE_RISK_DEGENERATE_SPREAD {
        return vec![0.5; mus.len()];
    }
    mus.iter().map(|mu| 1.0 - (mu - lo) / (hi - lo)).collect()
}

/// Scalar risk for ranking: `-Σ_c π̂_c μ_c`.
pub fn risk_score(m: &MixtureGrfn) -> f64 {
    -m.weights().iter().zip(m.components()).map(|(w, g)| w * g.mu()).sum::<f64>()
}
