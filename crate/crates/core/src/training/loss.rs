use rayon::prelude::*;

use super::{BinGrid, Sample, SurvivalRecord, TrainConfig, TrainError};
use crate::evidence::{slide_forward, ComponentPrototype, ComponentTrace, PrototypeBank};
use crate::special::{sigmoid, softplus};

/// Lower clamp applied to every probability before taking its logarithm.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

const ALIGNED_TANGENT: f64 = 1e-10;

fn neg_log(p: f64) -> f64 {
    -p.max(PROBABILITY_FLOOR).ln()
}

fn survival_at(s: &impl Fn(f64) -> f64, edge: Option<f64>, at_zero: bool) -> f64 {
    match edge {
        Some(t) => s(t),
        None if at_zero => 1.0,
        None => 0.0,
    }
}

/// `-log(S(T_j) - S(T_{j+1}))` for the bin holding an event time.
///
/// `s` evaluates the survival function at a finite positive time; the edges
/// `0` and `+∞` are taken as exactly 1 and 0.
pub fn nll_uncensored(s: impl Fn(f64) -> f64, rec: &SurvivalRecord, grid: &BinGrid) -> f64 {
    let j = grid.bin_of(rec.time);
    let lo = survival_at(&s, grid.lower(j), true);
    let hi = survival_at(&s, grid.upper(j), false);
    neg_log(lo - hi)
}

/// `ℓ_i`: the event term for uncensored subjects, `-log S(T_{j+1})` otherwise.
pub fn nll_subject(s: impl Fn(f64) -> f64, rec: &SurvivalRecord, grid: &BinGrid) -> f64 {
    if rec.censored {
        let j = grid.bin_of(rec.time);
        neg_log(survival_at(&s, grid.upper(j), false))
    } else {
        nll_uncensored(s, rec, grid)
    }
}

/// Batch-mean pieces of the objective, kept apart so each can be checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataTerms {
    /// mean `ℓ_i`
    pub nll: f64,
    /// mean `ℓ_i^unc`
    pub nll_uncensored: f64,
    pub r1: f64,
    pub r2: f64,
}

impl DataTerms {
    pub fn total(&self, cfg: &TrainConfig) -> f64 {
        (1.0 - cfg.alpha) * self.nll + cfg.alpha * self.nll_uncensored + cfg.xi * self.r1 + cfg.rho * self.r2
    }
}

/// Survival value and its gradient with respect to `(μ_c, σ²_c, h_c)` per component.
fn blended_at(traces: &[ComponentTrace], weights: &[f64], t: f64, lambda: f64) -> (f64, Vec<[f64; 3]>) {
    let x = t.ln();
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(traces.len());
    for (tr, w) in traces.iter().zip(weights) {
        let (v, g) = tr.grfn.blended_tail_with_grad(x, lambda);
        value += w * v;
        grads.push([w * g[0], w * g[1], w * g[2]]);
    }
    (value, grads)
}

struct SubjectTerms {
    nll: f64,
    nll_unc: f64,
    grad: Option<Vec<f64>>,
}

fn ratio_sigmoid_softplus(x: f64) -> f64 {
    if x < -30.0 {
        1.0 - 0.5 * x.exp()
    } else {
        sigmoid(x) / softplus(x)
    }
}

/// Accumulates `∂/∂θ` of the component GRFN `(μ_c, σ²_c, h_c)` into the
/// prototype parameters `θ`, given the upstream gradient `up`.
fn backprop_component(
    trace: &ComponentTrace,
    mean_c: &[f64],
    protos: &[ComponentPrototype],
    up: [f64; 3],
    out: &mut [f64],
) {
    let g = &trace.grfn;
    let (mu_c, s2_c, h_c) = (g.mu(), g.sigma2(), g.h());
    let d = mean_c.len();
    let stride = ComponentPrototype::param_count(d);
    let m_norm = mean_c.iter().map(|v| v * v).sum::<f64>().sqrt();
    for (k, (p, term)) in protos.iter().zip(&trace.terms).enumerate() {
        let block = &mut out[k * stride..(k + 1) * stride];
        let r = term.share;
        let g_logw = up[0] * r * (term.mu - mu_c) + up[1] * 2.0 * r * (r * term.sigma2 - s2_c) + up[2] * h_c * r;
        let g_mu = up[0] * r;
        let g_s2 = up[1] * r * r;

        let p_norm2: f64 = p.anchor.iter().map(|v| v * v).sum();
        let p_norm = p_norm2.sqrt();
        let cos = 1.0 - 2.0 * term.dcos;
        let g_d = -p.gamma * p.gamma * g_logw;
        let tangent: Vec<f64> = (0..d).map(|i| mean_c[i] / m_norm - cos * p.anchor[i] / p_norm).collect();
        // Below this the cosine distance is pure rounding and has no usable slope.
        if tangent.iter().map(|v| v * v).sum::<f64>().sqrt() > ALIGNED_TANGENT {
            for (b, t) in block.iter_mut().zip(&tangent) {
                *b += g_d * (-0.5 * t / p_norm);
            }
        }
        for (i, z) in trace.z.iter().enumerate() {
            block[d + i] += g_mu * z;
        }
        let tail = d + 2 * d + 1;
        block[tail] += g_mu;
        block[tail + 1] += g_s2 * term.sigma2;
        block[tail + 2] += g_logw * ratio_sigmoid_softplus(p.raw_h);
        block[tail + 3] += g_logw * (-2.0 * p.gamma * term.dcos);
    }
}

fn subject_terms(
    sample: &Sample,
    bank: &PrototypeBank,
    grid: &BinGrid,
    cfg: &TrainConfig,
    want_grad: bool,
) -> Result<SubjectTerms, TrainError> {
    let (emb, rec) = sample;
    let traces = slide_forward(emb, bank)?;
    let weights = emb.weights();
    let lambda = bank.lambda();
    let j = grid.bin_of(rec.time);

    let lo = grid.lower(j).map(|t| blended_at(&traces, &weights, t, lambda));
    let hi = grid.upper(j).map(|t| blended_at(&traces, &weights, t, lambda));
    let s_lo = lo.as_ref().map_or(1.0, |v| v.0);
    let s_hi = hi.as_ref().map_or(0.0, |v| v.0);

    // d(data term)/dS at the lower and upper edge
    let (nll, nll_unc, d_lo, d_hi);
    if rec.censored {
        nll = neg_log(s_hi);
        nll_unc = 0.0;
        d_lo = 0.0;
        d_hi = if s_hi > PROBABILITY_FLOOR { -(1.0 - cfg.alpha) / s_hi } else { 0.0 };
    } else {
        let p = s_lo - s_hi;
        nll = neg_log(p);
        nll_unc = nll;
        let dp = if p > PROBABILITY_FLOOR { -1.0 / p } else { 0.0 };
        d_lo = dp;
        d_hi = -dp;
    }
    if !want_grad {
        return Ok(SubjectTerms { nll, nll_unc, grad: None });
    }

    let mut grad = vec![0.0; bank.param_len()];
    let stride = ComponentPrototype::param_count(bank.dim());
    let mut offset = 0;
    for (c, (trace, protos)) in traces.iter().zip(bank.components()).enumerate() {
        let mut up = [0.0; 3];
        for (edge, scale) in [(&lo, d_lo), (&hi, d_hi)] {
            if let Some((_, g)) = edge {
                for i in 0..3 {
                    up[i] += scale * g[c][i];
                }
            }
        }
        let len = protos.len() * stride;
        if up.iter().any(|v| *v != 0.0) {
            backprop_component(trace, &emb.components[c].mean, protos, up, &mut grad[offset..offset + len]);
        }
        offset += len;
    }
    Ok(SubjectTerms { nll, nll_unc, grad: Some(grad) })
}

fn regularizers(bank: &PrototypeBank) -> (f64, f64) {
    let n = bank.prototype_count() as f64;
    let r1 = bank.prototypes().map(ComponentPrototype::h).sum::<f64>() / n;
    let r2 = bank.prototypes().map(|p| p.gamma * p.gamma).sum::<f64>() / n;
    (r1, r2)
}

fn evaluate(
    batch: &[&Sample],
    bank: &PrototypeBank,
    grid: &BinGrid,
    cfg: &TrainConfig,
    want_grad: bool,
) -> Result<(DataTerms, Option<Vec<f64>>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let per_subject: Vec<SubjectTerms> = batch
        .par_iter()
        .map(|s| subject_terms(s, bank, grid, cfg, want_grad))
        .collect::<Result<_, _>>()?;
    let n = batch.len() as f64;
    let (r1, r2) = regularizers(bank);
    let mut terms = DataTerms { nll: 0.0, nll_uncensored: 0.0, r1, r2 };
    for s in &per_subject {
        terms.nll += s.nll;
        terms.nll_uncensored += s.nll_unc;
    }
    terms.nll /= n;
    terms.nll_uncensored /= n;
    if !want_grad {
        return Ok((terms, None));
    }

    let mut grad = vec![0.0; bank.param_len()];
    for s in &per_subject {
        for (g, v) in grad.iter_mut().zip(s.grad.as_ref().expect("gradient requested")) {
            *g += v / n;
        }
    }
    let stride = ComponentPrototype::param_count(bank.dim());
    let np = bank.prototype_count() as f64;
    for (k, p) in bank.prototypes().enumerate() {
        let tail = (k + 1) * stride - 4;
        grad[tail + 2] += cfg.xi * sigmoid(p.raw_h) / np;
        grad[tail + 3] += cfg.rho * 2.0 * p.gamma / np;
    }
    Ok((terms, Some(grad)))
}

pub(crate) fn batch_terms(
    batch: &[&Sample],
    bank: &PrototypeBank,
    grid: &BinGrid,
    cfg: &TrainConfig,
) -> Result<DataTerms, TrainError> {
    Ok(evaluate(batch, bank, grid, cfg, false)?.0)
}

/// Mixture evidential loss of a batch:
/// `(1/N) Σ [(1-α) ℓ_i + α ℓ_i^unc] + ξ R1 + ρ R2`.
pub fn mixture_evidential_loss(
    batch: &[Sample],
    bank: &PrototypeBank,
    grid: &BinGrid,
    cfg: &TrainConfig,
) -> Result<f64, TrainError> {
    let refs: Vec<&Sample> = batch.iter().collect();
    Ok(batch_terms(&refs, bank, grid, cfg)?.total(cfg))
}

/// Loss and its gradient with respect to [`PrototypeBank::params`].
pub fn loss_and_gradient(
    batch: &[&Sample],
    bank: &PrototypeBank,
    grid: &BinGrid,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f64>), TrainError> {
    let (terms, grad) = evaluate(batch, bank, grid, cfg, true)?;
    Ok((terms.total(cfg), grad.expect("gradient requested")))
}
