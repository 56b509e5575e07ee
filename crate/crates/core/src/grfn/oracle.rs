//! Monte Carlo estimates of GRFN plausibility, used to check the closed forms.
//!
//! `Pl(A) = E_M[sup_{u ∈ A} φ(u; M, h)]` with `M ~ N(μ, σ²)`; the supremum of
//! the Gaussian membership over a set is `exp(-h d²/2)` where `d` is the
//! distance from `M` to the set. The integrand lies in `[0, 1]`, so the
//! standard error is at most `1/(2√n)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Grfn, Interval};

fn estimate(g: &Grfn, n: usize, seed: u64, distance: impl Fn(f64) -> f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = g.sigma();
    let mut total = 0.0;
    for _ in 0..n.max(1) {
        let z: f64 = StandardNormal.sample(&mut rng);
        let m = g.mu() + sigma * z;
        let d = distance(m);
        total += (-0.5 * g.h() * d * d).exp();
    }
    total / n.max(1) as f64
}

/// Monte Carlo estimate of `Pl(iv)`.
pub fn mc_oracle_pl(g: &Grfn, iv: &Interval, n: usize, seed: u64) -> f64 {
    estimate(g, n, seed, |m| iv.distance(m))
}

/// Monte Carlo estimate of `Pl((-∞, x] ∪ [y, ∞))`, the complement rays of `[x, y]`.
pub fn mc_oracle_pl_outside(g: &Grfn, x: f64, y: f64, n: usize, seed: u64) -> f64 {
    estimate(g, n, seed, |m| if m <= x || m >= y { 0.0 } else { (m - x).min(y - m) })
}

/// Monte Carlo estimate of the contour `pl(x) = E_M[φ(x; M, h)]`.
pub fn mc_oracle_contour(g: &Grfn, x: f64, n: usize, seed: u64) -> f64 {
    estimate(g, n, seed, |m| (m - x).abs())
}

/// Upper bound on the oracle's standard error at `n` samples.
pub fn standard_error_bound(n: usize) -> f64 {
    0.5 / (n.max(1) as f64).sqrt()
}
