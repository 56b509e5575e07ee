use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use serde::Serialize;

use dpsurv_core::data_io::{
    generate_synthetic, load_model, read_embedding_set, save_model, write_embedding_set, write_json, write_synthetic,
    SynthSpec,
};
use dpsurv_core::metrics::PredictionSet;
use dpsurv_core::rng::{derive_seed, stream_rng, Stream};
use dpsurv_core::training::{self, TrainConfig, TrainLogEntry};
use dpsurv_core::{PatchMatrix, PatchPrototypes};

use crate::args::{CrossvalArgs, EvaluateArgs, FitGmmArgs, PredictArgs, SynthArgs, TrainArgs};
use crate::output::{ensure_dir, header, num, write_config, write_csv, write_jsonl};
use crate::pipeline::{
    calibration_rows, default_times, embedding_set, fit_prototypes, fit_slides, load_cohort, metric_rows,
    predict_set, prediction_table, subset_ids, SlideFit, CALIBRATION_HEADER, METRIC_HEADER,
};

pub fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_subjects: a.n,
        dim: a.dim,
        n_components: a.components,
        patches_per_slide: a.patches,
        component_means: None,
        mean_scale: a.mean_scale,
        patch_sd: a.patch_sd,
        concentration: a.concentration,
        risk_coeffs: a.risk_coeffs.clone(),
        noise_sd: a.noise_sd,
        censor_rate: a.censor_rate,
        seed: a.seed,
    };
    let cohort = generate_synthetic(&spec)?;
    ensure_dir(&a.out)?;
    write_synthetic(&cohort, &a.out)?;
    let censored = cohort.truth.subjects.iter().filter(|s| s.censored).count();
    eprintln!("synth: {} subjects, {censored} censored -> {}", a.n, a.out.display());
    write_config(&a.out, "synth", &a, &spec)
}

fn em_log_rows(ids: &[String], fits: &[SlideFit]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (id, f) in ids.iter().zip(fits) {
        for (it, ll) in f.fit.log_likelihood.iter().enumerate() {
            rows.push(vec![id.clone(), it.to_string(), num(*ll)]);
        }
    }
    rows
}

pub fn fit_gmm(a: FitGmmArgs) -> Result<()> {
    let cohort = load_cohort(&a.manifest)?;
    let train_idx = match &a.train_ids {
        Some(p) => subset_ids(p, &cohort.manifest)?,
        None => (0..cohort.slides.len()).collect(),
    };
    if train_idx.is_empty() {
        bail!("no training subjects for the patch prototypes");
    }
    let train_slides: Vec<&PatchMatrix> = train_idx.iter().map(|&i| &cohort.slides[i]).collect();
    let protos = fit_prototypes(&train_slides, &a.gmm, a.seed)?;
    let fits = fit_slides(&cohort.slides, &protos, &a.gmm)?;
    let all: Vec<usize> = (0..cohort.slides.len()).collect();
    let set = embedding_set(&cohort.manifest, &fits, &all, a.gmm.components);

    ensure_dir(&a.out)?;
    write_embedding_set(a.out.join("embeddings.json"), &set)?;
    write_json(a.out.join("patch_prototypes.json"), &protos)?;
    let assign_dir = a.out.join("assignments");
    ensure_dir(&assign_dir)?;
    let ids: Vec<String> = cohort.manifest.subjects.iter().map(|e| e.subject_id.clone()).collect();
    for (id, f) in ids.iter().zip(&fits) {
        let rows: Vec<Vec<String>> =
            f.assignments.labels.iter().enumerate().map(|(i, l)| vec![i.to_string(), l.to_string()]).collect();
        write_csv(&assign_dir.join(format!("{id}.csv")), &header(&["patch_index", "component"]), &rows)?;
    }
    write_csv(&a.out.join("em_log.csv"), &header(&["subject_id", "iteration", "log_likelihood"]), &em_log_rows(&ids, &fits))?;
    let rescues: usize = fits.iter().map(|f| f.fit.rescues.len()).sum();
    let unconverged = fits.iter().filter(|f| !f.fit.converged).count();
    eprintln!("fit-gmm: {} slides, {rescues} empty-component rescues, {unconverged} hit max iterations", fits.len());
    #[derive(Serialize)]
    struct Resolved {
        prototype_subjects: usize,
        em_max_iter: usize,
        em_tol: f64,
    }
    write_config(&a.out, "fit-gmm", &a, Resolved { prototype_subjects: train_idx.len(), em_max_iter: a.gmm.em_max_iter, em_tol: a.gmm.em_tol })
}

fn read_prototypes(path: &std::path::Path) -> Result<PatchPrototypes> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let p: PatchPrototypes = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(PatchPrototypes::new(p.means().to_vec())?)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let set = read_embedding_set(&a.embeddings)?;
    let protos = read_prototypes(&a.prototypes)?;
    let val = match &a.val_embeddings {
        Some(p) => read_embedding_set(p)?.samples(),
        None => Vec::new(),
    };
    let cfg = a.train.config(a.seed);
    let outcome = training::train(&set.samples(), &val, &cfg).context("training")?;
    ensure_dir(&a.out)?;
    save_model(a.out.join("model.json"), &outcome.bank, &protos, &cfg)?;
    write_jsonl(&a.out.join("train_log.jsonl"), &outcome.log)?;
    report_training(&outcome.log);
    #[derive(Serialize)]
    struct Resolved<'a> {
        train_config: &'a TrainConfig,
        bin_edges: &'a [f64],
        best_epoch: usize,
    }
    write_config(&a.out, "train", &a, Resolved { train_config: &cfg, bin_edges: outcome.grid.interior_edges(), best_epoch: outcome.best_epoch })
}

fn report_training(log: &[TrainLogEntry]) {
    if let (Some(first), Some(last)) = (log.first(), log.last()) {
        eprintln!("train: loss {:.6} (epoch 0) -> {:.6} (epoch {})", first.train_loss, last.train_loss, last.epoch);
    }
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let (bank, _, cfg) = load_model(&a.model)?;
    let set = read_embedding_set(&a.embeddings)?;
    if set.dim != bank.dim() || set.n_components != bank.component_count() {
        bail!(
            "model expects {} components of dim {}, embeddings have {} of dim {}",
            bank.component_count(),
            bank.dim(),
            set.n_components,
            set.dim
        );
    }
    let lambda = a.lambda.unwrap_or(cfg.lambda_mix);
    let preds = predict_set(&bank, &set.slides, lambda)?;
    let times = a.predict.times.clone().unwrap_or_else(|| default_times(set.slides.iter().map(|s| s.time)));
    let (head, rows) = prediction_table(&preds, &times, &a.predict.alphas, None)?;
    ensure_dir(&a.out)?;
    write_csv(&a.out.join("predictions.csv"), &head, &rows)?;
    #[derive(Serialize)]
    struct Resolved {
        lambda: f64,
        times: Vec<f64>,
    }
    write_config(&a.out, "predict", &a, Resolved { lambda, times })
}

fn write_evaluation(dir: &std::path::Path, set: &PredictionSet, opts: &crate::args::EvalOpts) -> Result<[Option<f64>; 3]> {
    let (rows, values) = metric_rows(set, opts);
    write_csv(&dir.join("metrics.csv"), &header(&METRIC_HEADER), &rows)?;
    let cal = calibration_rows(set, &opts.coverage_alphas)?;
    write_csv(&dir.join("calibration.csv"), &header(&CALIBRATION_HEADER), &cal)?;
    Ok(values)
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let (bank, _, cfg) = load_model(&a.model)?;
    let set = read_embedding_set(&a.embeddings)?;
    let preds = predict_set(&bank, &set.slides, cfg.lambda_mix)?;
    ensure_dir(&a.out)?;
    let [ci, ibs, ibll] = write_evaluation(&a.out, &preds, &a.eval)?;
    eprintln!("evaluate: c-index {ci:?}, ibs {ibs:?}, ibll {ibll:?}");
    write_config(&a.out, "evaluate", &a, serde_json::json!({ "lambda": cfg.lambda_mix }))
}

/// Subject indices of each fold after a seeded shuffle.
fn folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, Stream::Folds, 0));
    let mut out = vec![Vec::new(); k];
    for (pos, i) in order.into_iter().enumerate() {
        out[pos % k].push(i);
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    out
}

pub fn crossval(a: CrossvalArgs) -> Result<()> {
    let cohort = load_cohort(&a.manifest)?;
    let n = cohort.slides.len();
    if a.folds < 2 || a.folds > n {
        bail!("--folds must lie in [2, {n}]");
    }
    let cfg = a.train.config(a.seed);
    cfg.validate()?;
    let fold_sets = folds(n, a.folds, a.seed);
    let times = a.predict.times.clone().unwrap_or_else(|| default_times(cohort.manifest.subjects.iter().map(|e| e.time)));
    ensure_dir(&a.out)?;

    let shared = if a.shared_prototypes {
        let all: Vec<&PatchMatrix> = cohort.slides.iter().collect();
        let protos = fit_prototypes(&all, &a.gmm, a.seed)?;
        Some((fit_slides(&cohort.slides, &protos, &a.gmm)?, protos))
    } else {
        None
    };

    let mut pooled = Vec::new();
    let mut pooled_fold = Vec::new();
    let mut fold_rows = Vec::new();
    let mut sums = [0.0; 3];
    let mut counts = [0usize; 3];
    for (f, test) in fold_sets.iter().enumerate() {
        let train_idx: Vec<usize> = (0..n).filter(|i| test.binary_search(i).is_err()).collect();
        let local;
        let (fits, protos) = match &shared {
            Some((fits, protos)) => (fits, protos),
            None => {
                let slides: Vec<&PatchMatrix> = train_idx.iter().map(|&i| &cohort.slides[i]).collect();
                let protos = fit_prototypes(&slides, &a.gmm, derive_seed(a.seed, Stream::KMeans, f as u64))?;
                local = (fit_slides(&cohort.slides, &protos, &a.gmm)?, protos);
                (&local.0, &local.1)
            }
        };
        let train_set = embedding_set(&cohort.manifest, fits, &train_idx, a.gmm.components);
        let test_set = embedding_set(&cohort.manifest, fits, test, a.gmm.components);
        let outcome = training::train(&train_set.samples(), &[], &cfg).with_context(|| format!("fold {f}"))?;
        let preds = predict_set(&outcome.bank, &test_set.slides, cfg.lambda_mix)?;

        let dir = a.out.join(format!("fold_{f}"));
        ensure_dir(&dir)?;
        save_model(dir.join("model.json"), &outcome.bank, protos, &cfg)?;
        write_jsonl(&dir.join("train_log.jsonl"), &outcome.log)?;
        let (head, rows) = prediction_table(&preds, &times, &a.predict.alphas, None)?;
        write_csv(&dir.join("predictions.csv"), &head, &rows)?;
        let values = write_evaluation(&dir, &preds, &a.eval)?;
        let mut row = vec![f.to_string(), train_idx.len().to_string(), test.len().to_string()];
        for (k, v) in values.iter().enumerate() {
            if let Some(v) = v {
                sums[k] += v;
                counts[k] += 1;
            }
            row.push(v.map_or_else(|| "NA".into(), num));
        }
        fold_rows.push(row);
        eprintln!("crossval: fold {f} c-index {:?}", values[0]);
        pooled_fold.extend(std::iter::repeat_n(f.to_string(), preds.len()));
        pooled.extend(preds.predictions);
    }

    write_csv(&a.out.join("folds.csv"), &header(&["fold", "n_train", "n_test", "c_index", "ibs", "ibll"]), &fold_rows)?;
    let names = ["c_index_mean", "ibs_mean", "ibll_mean"];
    let mean_rows: Vec<Vec<String>> = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let v = if counts[k] > 0 { num(sums[k] / counts[k] as f64) } else { "NA".into() };
            let note = if counts[k] < a.folds { format!("{} folds undefined", a.folds - counts[k]) } else { String::new() };
            vec![name.to_string(), v, counts[k].to_string(), "0".into(), note]
        })
        .collect();
    write_csv(&a.out.join("metrics.csv"), &header(&METRIC_HEADER), &mean_rows)?;

    let pooled = PredictionSet::new(pooled, cfg.lambda_mix);
    let (head, rows) = prediction_table(&pooled, &times, &a.predict.alphas, Some(("fold", &pooled_fold)))?;
    write_csv(&a.out.join("predictions.csv"), &head, &rows)?;
    let cal = calibration_rows(&pooled, &a.eval.coverage_alphas)?;
    write_csv(&a.out.join("calibration.csv"), &header(&CALIBRATION_HEADER), &cal)?;
    if counts[0] > 0 {
        eprintln!("crossval: mean c-index {:.4}", sums[0] / counts[0] as f64);
    }

    #[derive(Serialize)]
    struct Resolved<'a> {
        train_config: &'a TrainConfig,
        times: &'a [f64],
        folds: &'a [Vec<usize>],
    }
    write_config(&a.out, "crossval", &a, Resolved { train_config: &cfg, times: &times, folds: &fold_sets })
}
