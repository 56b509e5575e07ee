use std::path::Path;

use anyhow::{anyhow, Context, Result};
use rand::seq::index;
use rayon::prelude::*;

use dpsurv_core::data_io::{read_embedding_checked, read_manifest, CohortManifest, EmbeddingSet, SlideRecord};
use dpsurv_core::evidence::{relative_risk, slide_evidence, PrototypeBank};
use dpsurv_core::gmm::{assignment_map, em_fit, fit_patch_prototypes, AssignmentMap, EmFit, EmOptions};
use dpsurv_core::grfn::GrfnError;
use dpsurv_core::metrics::{
    c_index, calibration_coverage, ibll, ibs, km_censoring, IntervalKind, MetricValue, Prediction, PredictionSet,
};
use dpsurv_core::rng::{stream_rng, Stream};
use dpsurv_core::{PatchMatrix, PatchPrototypes, SlideEmbedding};

use crate::args::{EvalOpts, GmmOpts};
use crate::output::{num, opt_num};

pub struct Cohort {
    pub manifest: CohortManifest,
    pub slides: Vec<PatchMatrix>,
}

pub fn load_cohort(path: &Path) -> Result<Cohort> {
    let manifest = read_manifest(path)?;
    let slides = manifest
        .subjects
        .par_iter()
        .map(|e| read_embedding_checked(manifest.embedding_path(e), manifest.dim))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Cohort { manifest, slides })
}

/// k-means patch prototypes over the pooled patches of `slides`, subsampled to `cap`.
pub fn fit_prototypes(slides: &[&PatchMatrix], opts: &GmmOpts, seed: u64) -> Result<PatchPrototypes> {
    let pooled = PatchMatrix::stack(slides.iter().copied())?;
    let pooled = if pooled.n_patches() > opts.sample_cap {
        let mut rng = stream_rng(seed, Stream::PatchSample, u64::MAX);
        let mut idx = index::sample(&mut rng, pooled.n_patches(), opts.sample_cap).into_vec();
        idx.sort_unstable();
        pooled.select(&idx)?
    } else {
        pooled
    };
    Ok(fit_patch_prototypes(&pooled, opts.components, seed, opts.kmeans_iter)?)
}

pub struct SlideFit {
    pub fit: EmFit,
    pub assignments: AssignmentMap,
}

pub fn fit_slides(slides: &[PatchMatrix], protos: &PatchPrototypes, opts: &GmmOpts) -> Result<Vec<SlideFit>> {
    let em = EmOptions { max_iter: opts.em_max_iter, tol: opts.em_tol };
    slides
        .par_iter()
        .map(|m| {
            let fit = em_fit(m, protos, em)?;
            let assignments = assignment_map(m, &fit.params)?;
            Ok(SlideFit { fit, assignments })
        })
        .collect()
}

pub fn embedding_set(manifest: &CohortManifest, fits: &[SlideFit], indices: &[usize], n_components: usize) -> EmbeddingSet {
    let slides = indices
        .iter()
        .map(|&i| {
            let e = &manifest.subjects[i];
            SlideRecord {
                subject_id: e.subject_id.clone(),
                time: e.time,
                censored: e.censored,
                embedding: SlideEmbedding::from_params(&fits[i].fit.params),
            }
        })
        .collect();
    EmbeddingSet { dim: manifest.dim, n_components, slides }
}

pub fn predict_set(bank: &PrototypeBank, slides: &[SlideRecord], lambda: f64) -> Result<PredictionSet> {
    let preds = slides
        .par_iter()
        .map(|s| {
            let m = slide_evidence(&s.embedding, bank).with_context(|| format!("subject {}", s.subject_id))?;
            Ok(Prediction::new(m, s.record()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionSet::new(preds, lambda))
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The 10/30/50/70/90% quantiles of observed times.
pub fn default_times(times: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut t: Vec<f64> = times.collect();
    t.sort_by(f64::total_cmp);
    if t.is_empty() {
        return Vec::new();
    }
    [0.1, 0.3, 0.5, 0.7, 0.9].iter().map(|&p| quantile(&t, p)).collect()
}

/// Header and rows of the predictions table.
pub fn prediction_table(
    set: &PredictionSet,
    times: &[f64],
    alphas: &[f64],
    extra: Option<(&str, &[String])>,
) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let n_comp = set.predictions.first().map_or(0, |p| p.evidence.len());
    let mut header: Vec<String> = vec!["subject_id".into(), "time".into(), "censored".into()];
    if let Some((name, _)) = extra {
        header.push(name.into());
    }
    header.extend(["risk_score".into(), "pst".into()]);
    header.extend((1..=n_comp).map(|c| format!("mu_{c}")));
    header.extend((1..=n_comp).map(|c| format!("rr_{c}")));
    header.extend(times.iter().map(|t| format!("surv_t{t}")));
    for a in alphas {
        header.extend([format!("bpi_lo_{a}"), format!("bpi_hi_{a}"), format!("ppi_lo_{a}"), format!("ppi_hi_{a}")]);
    }

    let mut rows = Vec::with_capacity(set.len());
    for (i, p) in set.predictions.iter().enumerate() {
        let mut row = vec![p.record.subject_id.clone(), num(p.record.time), u8::from(p.record.censored).to_string()];
        if let Some((_, vals)) = extra {
            row.push(vals[i].clone());
        }
        let summary = match p.evidence.summarize() {
            Ok(g) => Some(g),
            Err(GrfnError::VacuousCombination) => None,
            Err(e) => return Err(e.into()),
        };
        row.push(num(p.risk));
        row.push(opt_num(summary.map(|g| g.mu().exp())));
        row.extend(p.evidence.components().iter().map(|g| num(g.mu())));
        row.extend(relative_risk(&p.evidence).into_iter().map(num));
        for &t in times {
            row.push(num(set.survival(i, t)?));
        }
        for &a in alphas {
            let bounds = |iv: dpsurv_core::Interval| {
                [num(iv.lo().map_or(0.0, f64::exp)), num(iv.hi().map_or(f64::INFINITY, f64::exp))]
            };
            let na = || ["NA".to_string(), "NA".to_string()];
            let (bpi, ppi) = match &summary {
                None => (na(), na()),
                Some(g) => {
                    let bpi = match g.bpi(a) {
                        Ok(iv) => bounds(iv),
                        Err(GrfnError::UnattainableLevel { .. }) => na(),
                        Err(e) => return Err(e.into()),
                    };
                    (bpi, bounds(g.ppi(a)?))
                }
            };
            row.extend(bpi);
            row.extend(ppi);
        }
        rows.push(row);
    }
    Ok((header, rows))
}

fn metric_row(name: &str, r: Result<MetricValue, dpsurv_core::metrics::MetricError>) -> Vec<String> {
    match r {
        Ok(v) => vec![name.into(), num(v.value), v.n.to_string(), v.dropped.to_string(), String::new()],
        Err(e) => vec![name.into(), "NA".into(), "0".into(), "0".into(), e.to_string()],
    }
}

pub const METRIC_HEADER: [&str; 5] = ["metric", "value", "n", "dropped", "note"];
pub const CALIBRATION_HEADER: [&str; 4] = ["alpha", "bpi_coverage", "ppi_coverage", "n_uncensored"];

/// Metric rows (C-index, IBS, IBLL) plus the raw values for aggregation.
pub fn metric_rows(set: &PredictionSet, opts: &EvalOpts) -> (Vec<Vec<String>>, [Option<f64>; 3]) {
    let ci = c_index(set).map(|v| MetricValue { value: v, n: set.len(), dropped: 0 });
    let integrated = km_censoring(&set.records()).and_then(|g| {
        let (lo, hi) = set.default_range()?;
        Ok((ibs(set, &g, lo, hi, opts.n_grid), ibll(set, &g, lo, hi, opts.n_grid)))
    });
    let (ibs_v, ibll_v) = match integrated {
        Ok(pair) => pair,
        Err(e) => (Err(e.clone()), Err(e)),
    };
    let values = [
        ci.as_ref().ok().map(|v| v.value),
        ibs_v.as_ref().ok().map(|v| v.value),
        ibll_v.as_ref().ok().map(|v| v.value),
    ];
    let rows = vec![metric_row("c_index", ci), metric_row("ibs", ibs_v), metric_row("ibll", ibll_v)];
    (rows, values)
}

pub fn calibration_rows(set: &PredictionSet, alphas: &[f64]) -> Result<Vec<Vec<String>>> {
    let bpi = calibration_coverage(set, alphas, IntervalKind::Bpi)?;
    let ppi = calibration_coverage(set, alphas, IntervalKind::Ppi)?;
    Ok(alphas
        .iter()
        .enumerate()
        .map(|(i, a)| vec![num(*a), opt_num(bpi.coverage[i]), opt_num(ppi.coverage[i]), bpi.n_uncensored.to_string()])
        .collect())
}

pub fn subset_ids(path: &Path, manifest: &CohortManifest) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|id| {
            manifest
                .subjects
                .iter()
                .position(|e| e.subject_id == id)
                .ok_or_else(|| anyhow!("{}: unknown subject {id:?}", path.display()))
        })
        .collect()
}
