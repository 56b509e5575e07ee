use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::json::write_json;
use super::manifest::{write_manifest, CohortManifest, ManifestEntry};
use super::{emb::write_embedding, io_err, DataError};
use crate::gmm::PatchMatrix;
use crate::rng::{stream_rng, Stream};

/// Recipe for a synthetic cohort with known ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub dim: usize,
    pub n_components: usize,
    /// Inclusive range of patches per slide.
    pub patches_per_slide: (usize, usize),
    /// `None` draws each coordinate from `N(0, mean_scale²)`.
    pub component_means: Option<Vec<Vec<f64>>>,
    pub mean_scale: f64,
    pub patch_sd: f64,
    /// Symmetric Dirichlet concentration of the occupancy draw.
    pub concentration: f64,
    /// `None` means evenly spaced on `[-1, 1]`.
    pub risk_coeffs: Option<Vec<f64>>,
    pub noise_sd: f64,
    pub censor_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_subjects: 200,
            dim: 16,
            n_components: 3,
            patches_per_slide: (128, 128),
            component_means: None,
            mean_scale: 3.0,
            patch_sd: 1.0,
            concentration: 1.0,
            risk_coeffs: None,
            noise_sd: 0.3,
            censor_rate: 0.25,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidSpec(m.into()));
        if self.n_subjects == 0 || self.dim == 0 || self.n_components == 0 {
            return bad("n_subjects, dim and n_components must be positive");
        }
        let (lo, hi) = self.patches_per_slide;
        if lo == 0 || lo > hi {
            return bad("patches_per_slide must be a nonempty range of positive counts");
        }
        if !(0.0..1.0).contains(&self.censor_rate) {
            return bad("censor_rate must lie in [0, 1)");
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be finite and nonnegative");
        }
        if !(self.patch_sd > 0.0 && self.mean_scale >= 0.0 && self.concentration > 0.0) {
            return bad("patch_sd and concentration must be positive, mean_scale nonnegative");
        }
        if let Some(m) = &self.component_means {
            if m.len() != self.n_components || m.iter().any(|r| r.len() != self.dim) {
                return bad("component_means must be n_components x dim");
            }
        }
        if let Some(c) = &self.risk_coeffs {
            if c.len() != self.n_components {
                return bad("risk_coeffs must have n_components entries");
            }
        }
        Ok(())
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.risk_coeffs.clone().unwrap_or_else(|| {
            let c = self.n_components;
            if c == 1 {
                vec![0.0]
            } else {
                (0..c).map(|i| -1.0 + 2.0 * i as f64 / (c - 1) as f64).collect()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub subject_id: String,
    pub occupancy: Vec<f64>,
    pub log_time: f64,
    pub censor_time: Option<f64>,
    pub observed_time: f64,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub spec: SynthSpec,
    pub component_means: Vec<Vec<f64>>,
    pub risk_coeffs: Vec<f64>,
    /// Upper end `L` of the uniform censoring distribution `U(0, L)`.
    pub censor_scale: Option<f64>,
    pub subjects: Vec<SubjectTruth>,
}

#[derive(Debug, Clone)]
pub struct SynthCohort {
    pub slides: Vec<PatchMatrix>,
    pub truth: SynthTruth,
}

impl SynthCohort {
    pub fn subject_id(i: usize) -> String {
        format!("subj_{i:04}")
    }
}

fn occupancy<R: Rng>(rng: &mut R, c: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("validated concentration");
    let draws: Vec<f64> = (0..c).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter().map(|g| g / total).collect()
    } else {
        let mut one = vec![0.0; c];
        one[rng.random_range(0..c)] = 1.0;
        one
    }
}

/// `U(0, L)` censoring scale giving exactly `round(rate·n)` censored subjects.
fn censor_scale(times: &[f64], uniforms: &[f64], rate: f64) -> Option<f64> {
    let n = times.len();
    let k = ((rate * n as f64).round() as usize).min(n - 1);
    if k == 0 {
        return None;
    }
    let mut ratios: Vec<f64> = times.iter().zip(uniforms).map(|(t, u)| t / u).collect();
    ratios.sort_by(|a, b| b.total_cmp(a));
    Some(ratios[k])
}

/// Draws a cohort: Dirichlet occupancies, patches from per-component
/// Gaussians, log-times linear in occupancy plus noise, uniform censoring.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthCohort, DataError> {
    spec.validate()?;
    let (c, d) = (spec.n_components, spec.dim);
    let means = match &spec.component_means {
        Some(m) => m.clone(),
        None => {
            let mut rng = stream_rng(spec.seed, Stream::Synth, 0);
            (0..c)
                .map(|_| (0..d).map(|_| spec.mean_scale * rng.sample::<f64, _>(StandardNormal)).collect())
                .collect()
        }
    };
    let coeffs = spec.coefficients();

    let mut slides = Vec::with_capacity(spec.n_subjects);
    let mut subjects = Vec::with_capacity(spec.n_subjects);
    let mut uniforms = Vec::with_capacity(spec.n_subjects);
    for i in 0..spec.n_subjects {
        let mut rng = stream_rng(spec.seed, Stream::Synth, i as u64 + 1);
        let occ = occupancy(&mut rng, c, spec.concentration);
        let noise: f64 = rng.sample(StandardNormal);
        let log_time = coeffs.iter().zip(&occ).map(|(b, o)| b * o).sum::<f64>() + spec.noise_sd * noise;
        uniforms.push(1.0 - rng.random::<f64>());

        let mut prng = stream_rng(spec.seed, Stream::PatchSample, i as u64);
        let (lo, hi) = spec.patches_per_slide;
        let n_patches = prng.random_range(lo..=hi);
        let pick = WeightedIndex::new(&occ).map_err(|e| DataError::InvalidSpec(e.to_string()))?;
        let mut data = Vec::with_capacity(n_patches * d);
        for _ in 0..n_patches {
            let k = pick.sample(&mut prng);
            for m in &means[k] {
                data.push(m + spec.patch_sd * prng.sample::<f64, _>(StandardNormal));
            }
        }
        slides.push(PatchMatrix::new(n_patches, d, data).map_err(|e| DataError::InvalidSpec(e.to_string()))?);
        subjects.push(SubjectTruth {
            subject_id: SynthCohort::subject_id(i),
            occupancy: occ,
            log_time,
            censor_time: None,
            observed_time: log_time.exp(),
            censored: false,
        });
    }

    let times: Vec<f64> = subjects.iter().map(|s| s.log_time.exp()).collect();
    let scale = censor_scale(&times, &uniforms, spec.censor_rate);
    if let Some(l) = scale {
        for ((s, u), t) in subjects.iter_mut().zip(&uniforms).zip(&times) {
            let ct = u * l;
            s.censor_time = Some(ct);
            if t / u > l {
                s.observed_time = ct;
                s.censored = true;
            }
        }
    }
    Ok(SynthCohort {
        slides,
        truth: SynthTruth { spec: spec.clone(), component_means: means, risk_coeffs: coeffs, censor_scale: scale, subjects },
    })
}

/// Writes `manifest.json`, `embeddings/<id>.emb` and `truth.json` under `out`.
pub fn write_synthetic(cohort: &SynthCohort, out: impl AsRef<Path>) -> Result<CohortManifest, DataError> {
    let out = out.as_ref();
    let emb_dir = out.join("embeddings");
    fs::create_dir_all(&emb_dir).map_err(io_err(&emb_dir))?;
    let mut entries = Vec::with_capacity(cohort.slides.len());
    for (m, s) in cohort.slides.iter().zip(&cohort.truth.subjects) {
        let rel = format!("embeddings/{}.emb", s.subject_id);
        write_embedding(out.join(&rel), m)?;
        entries.push(ManifestEntry {
            subject_id: s.subject_id.clone(),
            embedding_path: rel,
            time: s.observed_time,
            censored: s.censored,
        });
    }
    let manifest = CohortManifest { dim: cohort.truth.spec.dim, subjects: entries, base_dir: out.to_path_buf() };
    write_manifest(out.join("manifest.json"), &manifest)?;
    write_json(out.join("truth.json"), &cohort.truth)?;
    Ok(manifest)
}
