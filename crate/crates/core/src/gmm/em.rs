use super::{AssignmentMap, GmmError, GmmParams, PatchMatrix, PatchPrototypes};
use crate::special::{log_sum_exp, HALF_LN_2PI};

/// Lower bound applied to every variance entry after each M-step.
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// Components whose total responsibility falls below this are reinitialized.
pub const EMPTY_COMPONENT_MASS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop when `|ℓ_t - ℓ_{t-1}| < tol · |ℓ_{t-1}|`.
    pub tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-5 }
    }
}

/// Outcome of one slide's EM fit.
#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub params: GmmParams,
    /// Log-likelihood of the initial parameters followed by one entry per M-step.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    /// Trace indices whose preceding M-step reinitialized an empty component.
    pub rescues: Vec<usize>,
}

impl EmFit {
    pub fn iterations(&self) -> usize {
        self.log_likelihood.len().saturating_sub(1)
    }

    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood.last().expect("trace is never empty")
    }
}

fn log_density(z: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((x, m), v) in z.iter().zip(mean).zip(var) {
        let d = x - m;
        acc += HALF_LN_2PI + 0.5 * v.ln() + 0.5 * d * d / v;
    }
    -acc
}

/// Log joint `ln π_c + ln N(z; μ_c, Σ_c)` for each component.
fn log_joint(z: &[f64], params: &GmmParams, out: &mut [f64]) {
    for (c, o) in out.iter_mut().enumerate() {
        *o = params.weights[c].ln() + log_density(z, &params.means[c], &params.variances[c]);
    }
}

fn check_dims(patches: &PatchMatrix, dim: usize) -> Result<(), GmmError> {
    if patches.dim() != dim {
        return Err(GmmError::DimensionMismatch { expected: dim, found: patches.dim() });
    }
    Ok(())
}

/// `Σ_n log Σ_c π_c N(z_n; μ_c, Σ_c)`, with log-sum-exp over components.
pub fn log_likelihood(patches: &PatchMatrix, params: &GmmParams) -> Result<f64, GmmError> {
    check_dims(patches, params.dim())?;
    let mut buf = vec![0.0; params.count()];
    let mut total = 0.0;
    for z in patches.rows() {
        log_joint(z, params, &mut buf);
        total += log_sum_exp(&buf);
    }
    Ok(total)
}

/// E-step: fills responsibilities (`n × C`, row-major) and returns the log-likelihood.
fn e_step(patches: &PatchMatrix, params: &GmmParams, resp: &mut [f64]) -> f64 {
    let c = params.count();
    let mut total = 0.0;
    for (z, r) in patches.rows().zip(resp.chunks_exact_mut(c)) {
        log_joint(z, params, r);
        let lse = log_sum_exp(r);
        total += lse;
        r.iter_mut().for_each(|v| *v = (*v - lse).exp());
    }
    total
}

fn m_step(patches: &PatchMatrix, resp: &[f64], global_var: &[f64], params: &mut GmmParams) -> bool {
    let c = params.count();
    let d = patches.dim();
    let n = patches.n_patches() as f64;
    let mut mass = vec![0.0; c];
    let mut sums = vec![vec![0.0; d]; c];
    for (z, r) in patches.rows().zip(resp.chunks_exact(c)) {
        for k in 0..c {
            mass[k] += r[k];
            for (s, x) in sums[k].iter_mut().zip(z) {
                *s += r[k] * x;
            }
        }
    }
    let mut empty = Vec::new();
    for k in 0..c {
        if mass[k] < EMPTY_COMPONENT_MASS {
            empty.push(k);
            continue;
        }
        params.weights[k] = mass[k] / n;
        params.means[k] = sums[k].iter().map(|s| s / mass[k]).collect();
    }
    let mut sq = vec![vec![0.0; d]; c];
    for (z, r) in patches.rows().zip(resp.chunks_exact(c)) {
        for k in 0..c {
            if mass[k] < EMPTY_COMPONENT_MASS {
                continue;
            }
            for ((s, x), m) in sq[k].iter_mut().zip(z).zip(&params.means[k]) {
                *s += r[k] * (x - m) * (x - m);
            }
        }
    }
    for k in 0..c {
        if mass[k] >= EMPTY_COMPONENT_MASS {
            params.variances[k] = sq[k].iter().map(|s| (s / mass[k]).max(VARIANCE_FLOOR)).collect();
        }
    }
    if empty.is_empty() {
        return false;
    }

    // Rescue: move each empty component onto the least-explained patch.
    let mut max_resp: Vec<(usize, f64)> = resp
        .chunks_exact(c)
        .map(|r| r.iter().copied().fold(0.0, f64::max))
        .enumerate()
        .collect();
    max_resp.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    for (k, (patch, _)) in empty.iter().zip(max_resp) {
        params.means[*k] = patches.row(patch).to_vec();
        params.variances[*k] = global_var.to_vec();
        params.weights[*k] = 1.0 / c as f64;
    }
    let total: f64 = params.weights.iter().sum();
    params.weights.iter_mut().for_each(|w| *w /= total);
    true
}

/// Fits a diagonal GMM to one slide, seeded with the shared patch prototypes.
///
/// Weights start uniform, means at the prototypes and variances at the
/// slide's per-dimension variance.
pub fn em_fit(patches: &PatchMatrix, init: &PatchPrototypes, opts: EmOptions) -> Result<EmFit, GmmError> {
    check_dims(patches, init.dim())?;
    let c = init.count();
    let (_, global_var) = patches.column_moments();
    let global_var: Vec<f64> = global_var.iter().map(|v| v.max(VARIANCE_FLOOR)).collect();
    let mut params = GmmParams {
        weights: vec![1.0 / c as f64; c],
        means: init.means().to_vec(),
        variances: vec![global_var.clone(); c],
    };
    let mut resp = vec![0.0; patches.n_patches() * c];
    let mut trace = Vec::with_capacity(opts.max_iter + 1);
    let mut rescues = Vec::new();
    let mut converged = false;
    for iteration in 0..=opts.max_iter {
        let ll = e_step(patches, &params, &mut resp);
        if !ll.is_finite() {
            return Err(GmmError::NumericalFailure {
                iteration,
                detail: format!("log-likelihood {ll} (previous {:?})", trace.last()),
            });
        }
        if let Some(&prev) = trace.last() {
            trace.push(ll);
            let prev: f64 = prev;
            if (ll - prev).abs() < opts.tol * prev.abs() {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        if iteration == opts.max_iter {
            break;
        }
        if m_step(patches, &resp, &global_var, &mut params) {
            rescues.push(trace.len());
        }
    }
    params.validate().map_err(|e| GmmError::NumericalFailure {
        iteration: trace.len(),
        detail: e.to_string(),
    })?;
    Ok(EmFit { params, log_likelihood: trace, converged, rescues })
}

/// Highest-posterior component per patch; ties go to the lowest index.
pub fn assignment_map(patches: &PatchMatrix, params: &GmmParams) -> Result<AssignmentMap, GmmError> {
    check_dims(patches, params.dim())?;
    let mut buf = vec![0.0; params.count()];
    let labels = patches
        .rows()
        .map(|z| {
            log_joint(z, params, &mut buf);
            let mut best = 0;
            for (k, v) in buf.iter().enumerate() {
                if *v > buf[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    Ok(AssignmentMap { labels })
}
