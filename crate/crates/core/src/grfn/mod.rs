//! Gaussian random fuzzy numbers (GRFNs).
//!
//! A GRFN `Ñ(μ, σ², h)` is a random fuzzy subset of the real line whose
//! membership function is `φ(x; M, h) = exp(-h (x - M)² / 2)` with a Gaussian
//! mode `M ~ N(μ, σ²)`. `σ²` carries aleatory uncertainty and `h` is the
//! epistemic precision: `h = 0` is vacuous evidence, `h → ∞` recovers the
//! ordinary Gaussian `N(μ, σ²)`.
//!
//! Everything here is closed form except [`oracle`], which estimates the same
//! quantities by Monte Carlo for verification.

mod mixture;
pub mod oracle;

pub use mixture::{MixtureGrfn, WEIGHT_SUM_TOLERANCE};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{normal_cdf, normal_cdf_slope, normal_quantile};

/// Maximum number of bisection steps used by [`Grfn::bpi`].
pub const BPI_MAX_ITER: usize = 200;
/// Target accuracy of `Bel` at the returned belief prediction interval.
pub const BPI_TOLERANCE: f64 = 1e-10;
const BPI_MAX_DOUBLINGS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrfnError {
    #[error("invalid GRFN parameters (mu={mu}, sigma2={sigma2}, h={h})")]
    InvalidParameters { mu: f64, sigma2: f64, h: f64 },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("interval must be finite on both ends; use the half-line evaluators")]
    UnboundedInterval,
    #[error("combination has zero total evidence weight")]
    VacuousCombination,
    #[error("belief level {alpha} is not attainable (supremum of belief is {sup})")]
    UnattainableLevel { alpha: f64, sup: f64 },
    #[error("level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
}

/// A closed, possibly unbounded interval of the real line.
///
/// `None` on either side marks the corresponding infinity explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: Option<f64>,
    hi: Option<f64>,
}

impl Interval {
    /// `[lo, hi]` for finite `lo ≤ hi`.
    pub fn closed(lo: f64, hi: f64) -> Result<Self, GrfnError> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(GrfnError::InvalidInterval { lo, hi });
        }
        Ok(Self { lo: Some(lo), hi: Some(hi) })
    }

    /// `[lo, ∞)`.
    pub fn at_least(lo: f64) -> Result<Self, GrfnError> {
        if !lo.is_finite() {
            return Err(GrfnError::InvalidInterval { lo, hi: f64::INFINITY });
        }
        Ok(Self { lo: Some(lo), hi: None })
    }

    /// `(-∞, hi]`.
    pub fn at_most(hi: f64) -> Result<Self, GrfnError> {
        if !hi.is_finite() {
            return Err(GrfnError::InvalidInterval { lo: f64::NEG_INFINITY, hi });
        }
        Ok(Self { lo: None, hi: Some(hi) })
    }

    /// The whole real line.
    pub fn everything() -> Self {
        Self { lo: None, hi: None }
    }

    pub fn lo(&self) -> Option<f64> {
        self.lo
    }

    pub fn hi(&self) -> Option<f64> {
        self.hi
    }

    /// Finite endpoints, or `None` if either side is unbounded.
    pub fn finite_bounds(&self) -> Option<(f64, f64)> {
        Some((self.lo?, self.hi?))
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo.is_none_or(|lo| x >= lo) && self.hi.is_none_or(|hi| x <= hi)
    }

    /// Contains `other` as a subset.
    pub fn contains_interval(&self, other: &Interval) -> bool {
        let lo_ok = match (self.lo, other.lo) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(a), Some(b)) => a <= b,
        };
        let hi_ok = match (self.hi, other.hi) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(a), Some(b)) => a >= b,
        };
        lo_ok && hi_ok
    }

    /// Distance from `x` to the interval (zero inside).
    pub fn distance(&self, x: f64) -> f64 {
        if let Some(lo) = self.lo {
            if x < lo {
                return lo - x;
            }
        }
        if let Some(hi) = self.hi {
            if x > hi {
                return x - hi;
            }
        }
        0.0
    }
}

/// A Gaussian random fuzzy number `Ñ(μ, σ², h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grfn {
    mu: f64,
    sigma2: f64,
    h: f64,
}

/// `num / den` with the continuous-limit convention for `den = 0`:
/// `±∞` for nonzero numerators and `0` for `0/0`.
fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else if num < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}

impl Grfn {
    pub fn new(mu: f64, sigma2: f64, h: f64) -> Result<Self, GrfnError> {
        if !mu.is_finite() || !sigma2.is_finite() || sigma2 < 0.0 || !h.is_finite() || h < 0.0 {
            return Err(GrfnError::InvalidParameters { mu, sigma2, h });
        }
        Ok(Self { mu, sigma2, h })
    }

    /// The Gaussian limit `h → ∞` is represented by a very large finite precision.
    pub fn gaussian_limit(mu: f64, sigma2: f64) -> Result<Self, GrfnError> {
        Self::new(mu, sigma2, 1e12)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn is_vacuous(&self) -> bool {
        self.h == 0.0
    }

    /// `1 + h σ²`, the variance inflation shared by every closed form.
    fn inflation(&self) -> f64 {
        1.0 + self.h * self.sigma2
    }

    /// `Φ((t - μ)/σ)`.
    fn cdf_mode(&self, t: f64) -> f64 {
        normal_cdf(ratio(t - self.mu, self.sigma()))
    }

    /// `Φ(num / (σ √(1 + hσ²)))`.
    fn cdf_inflated(&self, num: f64) -> f64 {
        normal_cdf(ratio(num, (self.sigma2 * self.inflation()).sqrt()))
    }

    /// Contour function `pl(x)`, the plausibility of the singleton `{x}`.
    pub fn contour(&self, x: f64) -> f64 {
        let a = self.inflation();
        let d = x - self.mu;
        (-self.h * d * d / (2.0 * a)).exp() / a.sqrt()
    }

    /// `Pl([x, y])` for a finite interval.
    pub fn pl_interval(&self, iv: &Interval) -> Result<f64, GrfnError> {
        let (x, y) = iv.finite_bounds().ok_or(GrfnError::UnboundedInterval)?;
        if self.is_vacuous() {
            return Ok(1.0);
        }
        let core = self.cdf_mode(y) - self.cdf_mode(x);
        let left = self.contour(x) * self.cdf_inflated(x - self.mu);
        let right = self.contour(y) * (1.0 - self.cdf_inflated(y - self.mu));
        Ok((core + left + right).clamp(0.0, 1.0))
    }

    /// `Bel([x, y])` for a finite interval.
    pub fn bel_interval(&self, iv: &Interval) -> Result<f64, GrfnError> {
        let (x, y) = iv.finite_bounds().ok_or(GrfnError::UnboundedInterval)?;
        if self.is_vacuous() {
            return Ok(0.0);
        }
        let core = self.cdf_mode(y) - self.cdf_mode(x);
        let mid = 0.5 * (x + y);
        let spread = 0.5 * (y - x) * self.h * self.sigma2;
        let left = self.contour(x)
            * (self.cdf_inflated(mid - self.mu + spread) - self.cdf_inflated(x - self.mu));
        let right = self.contour(y)
            * (self.cdf_inflated(mid - self.mu - spread) - self.cdf_inflated(y - self.mu));
        Ok((core - left + right).clamp(0.0, 1.0))
    }

    /// `Pl([x, ∞))`.
    pub fn pl_halfline(&self, x: f64) -> f64 {
        1.0 - self.cdf_mode(x) + self.contour(x) * self.cdf_inflated(x - self.mu)
    }

    /// `Bel([x, ∞))`; equals `pl_halfline(x) - contour(x)`.
    pub fn bel_halfline(&self, x: f64) -> f64 {
        let pl = self.contour(x);
        1.0 - self.cdf_mode(x) - pl + pl * self.cdf_inflated(x - self.mu)
    }

    /// Plausibility of any interval, bounded or not.
    pub fn pl(&self, iv: &Interval) -> f64 {
        match (iv.lo, iv.hi) {
            (Some(_), Some(_)) => self.pl_interval(iv).expect("bounded interval"),
            (Some(x), None) => self.pl_halfline(x),
            // Pl((-∞, y]) = 1 - Bel((y, ∞)), and the closed forms are continuous.
            (None, Some(y)) => 1.0 - self.bel_halfline(y),
            (None, None) => 1.0,
        }
    }

    /// Belief of any interval, bounded or not.
    pub fn bel(&self, iv: &Interval) -> f64 {
        match (iv.lo, iv.hi) {
            (Some(_), Some(_)) => self.bel_interval(iv).expect("bounded interval"),
            (Some(x), None) => self.bel_halfline(x),
            (None, Some(y)) => 1.0 - self.pl_halfline(y),
            (None, None) => 1.0,
        }
    }

    fn bel_symmetric(&self, v: f64) -> f64 {
        let iv = Interval { lo: Some(self.mu - v), hi: Some(self.mu + v) };
        self.bel_interval(&iv).expect("bounded interval")
    }

    /// Belief prediction interval `μ ± v` with `Bel([μ - v, μ + v]) = α`.
    pub fn bpi(&self, alpha: f64) -> Result<Interval, GrfnError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(GrfnError::InvalidLevel(alpha));
        }
        if self.is_vacuous() {
            return Err(GrfnError::UnattainableLevel { alpha, sup: 0.0 });
        }
        let mut v_max = self.sigma() + 1.0;
        let mut bel_max = self.bel_symmetric(v_max);
        let mut doublings = 0;
        while bel_max < alpha {
            doublings += 1;
            if doublings > BPI_MAX_DOUBLINGS {
                return Err(GrfnError::UnattainableLevel { alpha, sup: bel_max });
            }
            v_max *= 2.0;
            bel_max = self.bel_symmetric(v_max);
        }
        let (mut lo, mut hi) = (0.0, v_max);
        let mut v = hi;
        for _ in 0..BPI_MAX_ITER {
            v = 0.5 * (lo + hi);
            let bel = self.bel_symmetric(v);
            if (bel - alpha).abs() <= BPI_TOLERANCE {
                break;
            }
            if bel < alpha {
                lo = v;
            } else {
                hi = v;
            }
        }
        Ok(Interval { lo: Some(self.mu - v), hi: Some(self.mu + v) })
    }

    /// Probabilistic prediction interval `μ ± Φ⁻¹((1 + α)/2) σ`.
    pub fn ppi(&self, alpha: f64) -> Result<Interval, GrfnError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(GrfnError::InvalidLevel(alpha));
        }
        let half = normal_quantile(0.5 * (1.0 + alpha)) * self.sigma();
        Ok(Interval { lo: Some(self.mu - half), hi: Some(self.mu + half) })
    }

    /// `Pl([x, ∞)) - λ pl(x)`, i.e. `λ Bel + (1 - λ) Pl` on the half-line, together
    /// with its gradient with respect to `(μ, σ², h)`.
    ///
    /// Requires `σ² > 0`; the gradient is reported as zero otherwise.
    pub fn blended_tail_with_grad(&self, x: f64, lambda: f64) -> (f64, [f64; 3]) {
        let (mu, s2, h) = (self.mu, self.sigma2, self.h);
        let value = self.pl_halfline(x) - lambda * self.contour(x);
        if s2 <= 0.0 {
            return (value, [0.0; 3]);
        }
        let d = x - mu;
        let a = 1.0 + h * s2;
        let s = s2.sqrt();
        let q = s2 * a;
        let sq = q.sqrt();
        let u = d / s;
        let v = d / sq;
        let pl = self.contour(x);
        let cdf_v = normal_cdf(v);
        let slope_u = normal_cdf_slope(u);
        let slope_v = normal_cdf_slope(v);

        let du = [-1.0 / s, -u / (2.0 * s2), 0.0];
        let q32 = q * sq;
        let dv = [-1.0 / sq, -d * (1.0 + 2.0 * h * s2) / (2.0 * q32), -d * s2 * s2 / (2.0 * q32)];
        let dlog_pl = [
            h * d / a,
            -h / (2.0 * a) + h * h * d * d / (2.0 * a * a),
            -s2 / (2.0 * a) - d * d / (2.0 * a * a),
        ];
        let mut grad = [0.0; 3];
        for i in 0..3 {
            grad[i] = -slope_u * du[i] + pl * dlog_pl[i] * (cdf_v - lambda) + pl * slope_v * dv[i];
        }
        (value, grad)
    }
}

/// Unnormalized product–intersection combination of weighted GRFN evidence.
///
/// Each item is `(s_k, Ñ(μ_k, σ²_k, h_k))` with discount `s_k ∈ [0, 1]`:
/// `h = Σ s_k h_k`, `μ = Σ s_k h_k μ_k / h`, `σ² = Σ (s_k h_k)² σ²_k / h²`.
pub fn combine(evidence: &[(f64, Grfn)]) -> Result<Grfn, GrfnError> {
    if evidence.is_empty() {
        return Err(GrfnError::VacuousCombination);
    }
    let total: f64 = evidence.iter().map(|(s, g)| s * g.h).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(GrfnError::VacuousCombination);
    }
    let mut mu = 0.0;
    let mut sigma2 = 0.0;
    for (s, g) in evidence {
        let w = s * g.h / total;
        mu += w * g.mu;
        sigma2 += w * w * g.sigma2;
    }
    Grfn::new(mu, sigma2, total)
}
