#![allow(dead_code)]

use dpsurv_core::gmm::ComponentEmbedding;
use dpsurv_core::training::Sample;
use dpsurv_core::{ComponentPrototype, Grfn, PrototypeBank, SlideEmbedding, SurvivalRecord};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grfn(r: &mut impl Rng) -> Grfn {
    let mu = r.random_range(-3.0..3.0);
    let sigma2 = r.random_range(0.05..4.0);
    let h = 10f64.powf(r.random_range(-2.0..2.0));
    Grfn::new(mu, sigma2, h).unwrap()
}

fn unit_vec(r: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

pub fn random_prototype(r: &mut impl Rng, d: usize) -> ComponentPrototype {
    ComponentPrototype {
        anchor: unit_vec(r, d),
        coeffs: (0..2 * d + 1).map(|_| r.random_range(-0.3..0.3)).collect(),
        intercept: r.random_range(-0.5..1.0),
        log_var: r.random_range(-1.5..0.5),
        raw_h: r.random_range(-1.0..1.5),
        gamma: r.random_range(0.5..2.0),
    }
}

pub fn random_bank(r: &mut impl Rng, c: usize, k: usize, d: usize, lambda: f64) -> PrototypeBank {
    let comps = (0..c).map(|_| (0..k).map(|_| random_prototype(r, d)).collect()).collect();
    PrototypeBank::new(comps, lambda).unwrap()
}

pub fn random_embedding(r: &mut impl Rng, c: usize, d: usize) -> SlideEmbedding {
    let raw: Vec<f64> = (0..c).map(|_| r.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    SlideEmbedding {
        components: raw
            .iter()
            .map(|w| ComponentEmbedding {
                weight: w / total,
                mean: (0..d).map(|_| r.random_range(-1.5..1.5)).collect(),
                var_diag: (0..d).map(|_| r.random_range(0.2..1.5)).collect(),
            })
            .collect(),
    }
}

pub fn random_samples(r: &mut impl Rng, n: usize, c: usize, d: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let emb = random_embedding(r, c, d);
            let time = r.random_range(0.2..5.0);
            let censored = i % 3 == 2;
            (emb, SurvivalRecord::new(format!("s{i}"), time, censored).unwrap())
        })
        .collect()
}
