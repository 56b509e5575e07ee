use rand::Rng;

use super::{GmmError, PatchMatrix, PatchPrototypes};
use crate::rng::{stream_rng, Stream};

/// Result of a (weighted) Lloyd's k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Draws an index with probability proportional to `mass`; `None` if all mass is zero.
fn draw_proportional<R: Rng>(mass: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut target = rng.random::<f64>() * total;
    for (i, m) in mass.iter().enumerate() {
        if *m > 0.0 {
            if target < *m {
                return Some(i);
            }
            target -= m;
        }
    }
    mass.iter().rposition(|m| *m > 0.0)
}

/// Weighted k-means++ seeding followed by Lloyd iterations.
///
/// Empty clusters are reseeded from the point farthest from its centroid.
/// Assignment ties go to the lowest cluster index.
pub fn weighted_kmeans<R: Rng>(
    points: &[&[f64]],
    weights: &[f64],
    k: usize,
    max_iter: usize,
    rng: &mut R,
) -> Result<KMeansFit, GmmError> {
    let n = points.len();
    if k == 0 || n < k {
        return Err(GmmError::TooFewPoints { points: n, clusters: k });
    }
    if weights.len() != n {
        return Err(GmmError::DimensionMismatch { expected: n, found: weights.len() });
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(GmmError::DimensionMismatch { expected: dim, found: p.len() });
    }

    // k-means++ seeding, D² sampling scaled by the sample weights.
    let first = draw_proportional(weights, rng).unwrap_or(0);
    let mut chosen = vec![first];
    let mut centroids = vec![points[first].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let mass: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        let next = draw_proportional(&mass, rng)
            .or_else(|| (0..n).find(|i| !chosen.contains(i)))
            .unwrap_or(0);
        chosen.push(next);
        centroids.push(points[next].to_vec());
        let c = centroids.last().expect("just pushed");
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, c));
        }
    }

    let mut labels = vec![usize::MAX; n];
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut dist = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let (k_best, d) = nearest(p, &centroids);
            dist[i] = d;
            if labels[i] != k_best {
                labels[i] = k_best;
                changed = true;
            }
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut mass = vec![0.0; k];
        for ((p, &l), &w) in points.iter().zip(&labels).zip(weights) {
            mass[l] += w;
            for (s, v) in sums[l].iter_mut().zip(p.iter()) {
                *s += w * v;
            }
        }
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..k {
            if mass[c] > 0.0 {
                centroids[c] = sums[c].iter().map(|s| s / mass[c]).collect();
            } else {
                // Reseed from the farthest point not already used for a repair.
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
                if let Some(far) = far {
                    taken.push(far);
                    centroids[c] = points[far].to_vec();
                    dist[far] = 0.0;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        labels[i] = nearest(p, &centroids).0;
    }
    Ok(KMeansFit { centroids, labels, iterations })
}

/// Patch prototypes from unweighted k-means++ / Lloyd over a pooled patch sample.
pub fn fit_patch_prototypes(
    sample: &PatchMatrix,
    count: usize,
    seed: u64,
    max_iter: usize,
) -> Result<PatchPrototypes, GmmError> {
    if count > sample.n_patches() || count == 0 {
        return Err(GmmError::TooFewPoints { points: sample.n_patches(), clusters: count });
    }
    let points: Vec<&[f64]> = sample.rows().collect();
    let weights = vec![1.0; points.len()];
    let mut rng = stream_rng(seed, Stream::KMeans, 0);
    let fit = weighted_kmeans(&points, &weights, count, max_iter, &mut rng)?;
    PatchPrototypes::new(fit.centroids)
}
