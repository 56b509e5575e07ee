use super::{validate_dataset, Sample, TrainConfig, TrainError};
use crate::evidence::{cosine_distance, ComponentPrototype, PrototypeBank};
use crate::gmm::weighted_kmeans;
use crate::rng::{stream_rng, Stream};
use crate::special::softplus_inverse;

/// Initial `h` is this multiple of the cluster's average occupancy.
pub const H_INIT_SCALE: f64 = 4.0;
pub const VARIANCE_INIT_FLOOR: f64 = 1e-4;
pub const GAMMA_DISTANCE_FLOOR: f64 = 1e-6;
const KMEANS_MAX_ITER: usize = 100;

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

struct Member {
    direction: Vec<f64>,
    weight: f64,
    log_time: f64,
}

fn members(data: &[Sample], c: usize, tau: f64) -> Vec<Member> {
    data.iter()
        .filter_map(|(emb, rec)| {
            let comp = &emb.components[c];
            (comp.weight > tau).then_some(())?;
            Some(Member { direction: unit(&comp.mean)?, weight: comp.weight, log_time: rec.time.ln() })
        })
        .collect()
}

fn prototype(cluster: &[&Member], anchor: Vec<f64>, dim: usize) -> Result<ComponentPrototype, TrainError> {
    let mass: f64 = cluster.iter().map(|m| m.weight).sum();
    let b0 = cluster.iter().map(|m| m.weight * m.log_time).sum::<f64>() / mass;
    let var = cluster.iter().map(|m| m.weight * (m.log_time - b0).powi(2)).sum::<f64>() / mass;
    let avg_weight = mass / cluster.len() as f64;
    let mut dist = 0.0;
    for m in cluster {
        dist += cosine_distance(&m.direction, &anchor)?;
    }
    let dist = (dist / cluster.len() as f64).max(GAMMA_DISTANCE_FLOOR);
    Ok(ComponentPrototype {
        anchor,
        coeffs: vec![0.0; 2 * dim + 1],
        intercept: b0,
        log_var: var.max(VARIANCE_INIT_FLOOR).ln(),
        raw_h: softplus_inverse(H_INIT_SCALE * avg_weight),
        gamma: 1.0 / dist.sqrt(),
    })
}

/// Evidential initialization of the prototype bank by weighted k-means over
/// the normalized component means of the training slides.
pub fn init_bank(train: &[Sample], cfg: &TrainConfig) -> Result<PrototypeBank, TrainError> {
    validate_dataset(train)?;
    cfg.validate()?;
    let n_comp = train[0].0.count();
    let dim = train[0].0.dim();
    let mut bank = Vec::with_capacity(n_comp);
    for c in 0..n_comp {
        let mut pool = members(train, c, cfg.tau);
        if pool.is_empty() {
            pool = members(train, c, 0.0);
        }
        if pool.is_empty() {
            return Err(TrainError::EmptyComponent(c));
        }
        let k = cfg.k.for_component(c).min(pool.len()).max(1);
        let points: Vec<&[f64]> = pool.iter().map(|m| m.direction.as_slice()).collect();
        let weights: Vec<f64> = pool.iter().map(|m| m.weight).collect();
        let mut rng = stream_rng(cfg.seed, Stream::BankInit, c as u64);
        let fit = weighted_kmeans(&points, &weights, k, KMEANS_MAX_ITER, &mut rng)?;

        let all: Vec<&Member> = pool.iter().collect();
        let mut protos = Vec::with_capacity(k);
        for (j, centroid) in fit.centroids.iter().enumerate() {
            let cluster: Vec<&Member> = pool.iter().zip(&fit.labels).filter(|(_, &l)| l == j).map(|(m, _)| m).collect();
            let cluster = if cluster.is_empty() { all.clone() } else { cluster };
            let anchor = unit(centroid).unwrap_or_else(|| cluster[0].direction.clone());
            protos.push(prototype(&cluster, anchor, dim)?);
        }
        bank.push(protos);
    }
    Ok(PrototypeBank::new(bank, cfg.lambda_mix)?)
}
