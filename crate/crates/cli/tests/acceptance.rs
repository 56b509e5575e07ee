//! One pass/fail line per acceptance criterion. Exits nonzero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use dpsurv_core::evidence::{slide_evidence, survival_function};
use dpsurv_core::gmm::{em_fit, fit_patch_prototypes, ComponentEmbedding, EmOptions};
use dpsurv_core::grfn::oracle::{mc_oracle_pl, mc_oracle_pl_outside};
use dpsurv_core::grfn::GrfnError;
use dpsurv_core::metrics::{bll, brier_score, km_censoring, Prediction, PredictionSet};
use dpsurv_core::special::normal_cdf;
use dpsurv_core::training::{grad_check, mixture_evidential_loss, nll_subject, nll_uncensored, Sample};
use dpsurv_core::{
    BinGrid, ComponentPrototype, Grfn, Interval, MixtureGrfn, PatchMatrix, PatchPrototypes, PrototypeBank,
    SlideEmbedding, SurvivalRecord, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

type Check = Result<String, String>;
type Criterion<'a> = (u32, &'static str, Duration, Box<dyn Fn() -> Check + 'a>);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_grfn(r: &mut impl Rng) -> Grfn {
    Grfn::new(r.random_range(-3.0..3.0), r.random_range(0.05..4.0), 10f64.powf(r.random_range(-2.0..2.0))).unwrap()
}

fn c1_closed_form_vs_monte_carlo() -> Check {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for case in 0..50u64 {
        let g = random_grfn(&mut r);
        let x = r.random_range(-4.0..3.0);
        let y = x + r.random_range(0.01..3.0);
        let iv = Interval::closed(x, y).unwrap();
        let dp = (g.pl(&iv) - mc_oracle_pl(&g, &iv, 1_000_000, 2 * case)).abs();
        let db = (g.bel(&iv) - (1.0 - mc_oracle_pl_outside(&g, x, y, 1_000_000, 2 * case + 1))).abs();
        worst = worst.max(dp).max(db);
    }
    let msg = format!("max |closed form - MC| = {worst:.2e} over 50 cases");
    if worst <= 1e-2 { Ok(msg) } else { Err(msg) }
}

fn c2_halfline_identity() -> Check {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let g = random_grfn(&mut r);
        let x = r.random_range(-6.0..6.0);
        worst = worst.max((g.pl_halfline(x) - g.bel_halfline(x) - g.contour(x)).abs());
    }
    let msg = format!("max |Pl - Bel - pl| = {worst:.2e} over 1000 cases");
    if worst <= 1e-12 { Ok(msg) } else { Err(msg) }
}

fn c3_gaussian_degeneration() -> Check {
    let (mu, s2) = (0.4, 1.3);
    let g = Grfn::new(mu, s2, 1e8).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let x = -3.0 + 0.3 * i as f64;
        let y = x + 0.2 + 0.15 * i as f64;
        let p = normal_cdf((y - mu) / s2.sqrt()) - normal_cdf((x - mu) / s2.sqrt());
        let iv = Interval::closed(x, y).unwrap();
        worst = worst.max((g.pl(&iv) - p).abs()).max((g.bel(&iv) - p).abs());
    }
    let msg = format!("max |Bel/Pl - Gaussian| = {worst:.2e} on 20 intervals");
    if worst <= 1e-3 { Ok(msg) } else { Err(msg) }
}

fn c4_vacuity() -> Check {
    let mut r = rng(4);
    let mut bad = 0;
    for _ in 0..200 {
        let g = Grfn::new(r.random_range(-3.0..3.0), r.random_range(0.05..4.0), 0.0).unwrap();
        let x = r.random_range(-10.0..10.0);
        let iv = Interval::closed(x, x + r.random_range(0.0..5.0)).unwrap();
        bad += usize::from(g.bel(&iv) != 0.0 || g.pl(&iv) != 1.0);
        let alpha = r.random_range(1e-6..1.0);
        bad += usize::from(!matches!(g.bpi(alpha), Err(GrfnError::UnattainableLevel { .. })));
    }
    let msg = format!("{bad} violations over 200 vacuous GRFNs");
    if bad == 0 { Ok(msg) } else { Err(msg) }
}

fn random_slide(r: &mut impl Rng, n: usize, d: usize, centers: &[Vec<f64>]) -> PatchMatrix {
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let c = &centers[r.random_range(0..centers.len())];
        let scale = r.random_range(0.3..1.5);
        data.extend(c.iter().map(|m| {
            let z: f64 = StandardNormal.sample(r);
            m + scale * z
        }));
    }
    PatchMatrix::new(n, d, data).unwrap()
}

fn c5_em() -> Check {
    let mut r = rng(5);
    let d = 4;
    let mut worst_drop: f64 = 0.0;
    for slide in 0..100u64 {
        let centers: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
        let n = r.random_range(40..150);
        let patches = random_slide(&mut r, n, d, &centers);
        let init = fit_patch_prototypes(&patches, 3, slide, 50).map_err(|e| e.to_string())?;
        let fit = em_fit(&patches, &init, EmOptions { max_iter: 100, tol: 0.0 }).map_err(|e| e.to_string())?;
        for w in fit.log_likelihood.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }
    let mut worst_mle: f64 = 0.0;
    for _ in 0..10 {
        let patches = random_slide(&mut r, 60, d, &[vec![1.0, -1.0, 0.5, 2.0]]);
        let (mean, _) = patches.column_moments();
        let n = patches.n_patches() as f64;
        let fit = em_fit(&patches, &PatchPrototypes::new(vec![vec![0.0; d]]).unwrap(), EmOptions::default())
            .map_err(|e| e.to_string())?;
        for j in 0..d {
            let var = patches.rows().map(|row| (row[j] - mean[j]).powi(2)).sum::<f64>() / n;
            worst_mle = worst_mle
                .max((fit.params.means[0][j] - mean[j]).abs())
                .max((fit.params.variances[0][j] - var).abs())
                .max((fit.params.weights[0] - 1.0).abs());
        }
    }
    let msg = format!("largest log-likelihood drop {worst_drop:.2e} over 100 slides; C=1 MLE error {worst_mle:.2e}");
    if worst_drop <= 1e-8 && worst_mle <= 1e-9 { Ok(msg) } else { Err(msg) }
}

fn unit(r: &mut impl Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
    v.iter().map(|x| x / n).collect()
}

fn random_bank(r: &mut impl Rng, c: usize, k: usize, d: usize, lambda: f64) -> PrototypeBank {
    let comps = (0..c)
        .map(|_| {
            (0..k)
                .map(|_| ComponentPrototype {
                    anchor: unit(r, d),
                    coeffs: (0..2 * d + 1).map(|_| r.random_range(-0.3..0.3)).collect(),
                    intercept: r.random_range(-0.5..1.0),
                    log_var: r.random_range(-1.5..0.5),
                    raw_h: r.random_range(-1.0..1.5),
                    gamma: r.random_range(0.5..2.0),
                })
                .collect()
        })
        .collect();
    PrototypeBank::new(comps, lambda).unwrap()
}

fn random_batch(r: &mut impl Rng, n: usize, c: usize, d: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let raw: Vec<f64> = (0..c).map(|_| r.random_range(0.05..1.0)).collect();
            let tot: f64 = raw.iter().sum();
            let emb = SlideEmbedding {
                components: raw
                    .iter()
                    .map(|w| ComponentEmbedding {
                        weight: w / tot,
                        mean: (0..d).map(|_| r.random_range(-1.5..1.5)).collect(),
                        var_diag: (0..d).map(|_| r.random_range(0.2..1.5)).collect(),
                    })
                    .collect(),
            };
            (emb, SurvivalRecord::new(format!("s{i}"), r.random_range(0.2..5.0), i % 3 == 2).unwrap())
        })
        .collect()
}

fn c6_grad_check() -> Check {
    let cfg = TrainConfig::default();
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let mut r = rng(60 + seed);
        let bank = random_bank(&mut r, 2, 2, 3, 0.1);
        let batch = random_batch(&mut r, 8, 2, 3);
        let grid = BinGrid::from_interior(vec![0.8, 1.6, 3.0]).unwrap();
        worst = worst.max(grad_check(&bank, &batch, &grid, &cfg, 1e-5).map_err(|e| e.to_string())?);
    }
    let msg = format!("max relative error {worst:.2e} over 5 seeds");
    if worst <= 1e-4 { Ok(msg) } else { Err(msg) }
}

fn c7_loss_decomposition() -> Check {
    let mut r = rng(7);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let lambda = r.random_range(0.0..1.0);
        let bank = random_bank(&mut r, 3, 2, 4, lambda);
        let batch = random_batch(&mut r, 8, 3, 4);
        let grid = BinGrid::from_interior(vec![0.7, 1.5, 2.8]).unwrap();
        let cfg = TrainConfig {
            alpha: r.random_range(0.0..1.0),
            xi: r.random_range(0.0..0.1),
            rho: r.random_range(0.0..0.1),
            ..TrainConfig::default()
        };
        let got = mixture_evidential_loss(&batch, &bank, &grid, &cfg).map_err(|e| e.to_string())?;
        let n = batch.len() as f64;
        let (mut l, mut lu) = (0.0, 0.0);
        for (emb, rec) in &batch {
            let m = slide_evidence(emb, &bank).unwrap();
            let s = |t: f64| survival_function(&m, t, lambda).unwrap();
            l += nll_subject(s, rec, &grid);
            if !rec.censored {
                lu += nll_uncensored(s, rec, &grid);
            }
        }
        let p = bank.prototype_count() as f64;
        let r1 = bank.prototypes().map(|q| q.h()).sum::<f64>() / p;
        let r2 = bank.prototypes().map(|q| q.gamma * q.gamma).sum::<f64>() / p;
        let want = (1.0 - cfg.alpha) * l / n + cfg.alpha * lu / n + cfg.xi * r1 + cfg.rho * r2;
        worst = worst.max((got - want).abs());
    }
    let msg = format!("max |loss - pieces| = {worst:.2e} over 10 batches");
    if worst <= 1e-9 { Ok(msg) } else { Err(msg) }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dpsurv")
}

fn run(args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(path: &Path) -> Result<Vec<csv::StringRecord>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    r.records().collect::<Result<_, _>>().map_err(|e| e.to_string())
}

fn c8_discrimination(work: &Path) -> Check {
    let d = work.join("standard");
    let cv = work.join("standard_cv");
    run(&["synth", "--n", "200", "--components", "3", "--risk-coeffs", "-1,0,1", "--noise-sd", "0.3", "--censor-rate", "0.25", "--seed", "7", "--out", s(&d)])?;
    run(&["crossval", "--manifest", s(&d.join("manifest.json")), "--folds", "5", "--seed", "7", "--out", s(&cv)])?;
    let rows = csv_rows(&cv.join("metrics.csv"))?;
    let c = rows
        .iter()
        .find(|r| &r[0] == "c_index_mean")
        .and_then(|r| r[1].parse::<f64>().ok())
        .ok_or("c_index_mean missing")?;
    let msg = format!("mean 5-fold test C-index {c:.4}");
    if c >= 0.75 { Ok(msg) } else { Err(msg) }
}

/// Near one-hot occupancy with noise-dominated log-times, fitted with one
/// prototype per component and the belief/plausibility midpoint.
fn c9_calibration(work: &Path) -> Check {
    let d = work.join("calibration");
    let cv = work.join("calibration_cv");
    run(&["synth", "--n", "420", "--concentration", "0.05", "--noise-sd", "1.0", "--censor-rate", "0.25", "--seed", "11", "--out", s(&d)])?;
    run(&["crossval", "--manifest", s(&d.join("manifest.json")), "--folds", "5", "--seed", "7", "--k", "1", "--lambda", "0.5", "--out", s(&cv)])?;
    let mut errs = Vec::new();
    let mut parts = Vec::new();
    for row in csv_rows(&cv.join("calibration.csv"))? {
        let f = |i: usize| row[i].parse::<f64>().unwrap_or(f64::NAN);
        let (alpha, bpi, ppi, n) = (f(0), f(1), f(2), f(3));
        if n < 300.0 {
            errs.push(format!("n_uncensored {n}"));
        }
        if bpi.is_nan() || ppi.is_nan() || bpi < ppi {
            errs.push(format!("BPI {bpi:.3} < PPI {ppi:.3} at {alpha}"));
        }
        if [0.5, 0.7, 0.9].iter().any(|a| (a - alpha).abs() < 1e-9) {
            parts.push(format!("{alpha}: {ppi:.3}"));
            if (ppi - alpha).abs() > 0.07 {
                errs.push(format!("PPI coverage {ppi:.3} at {alpha}"));
            }
        }
    }
    let mut r = csv::Reader::from_path(cv.join("predictions.csv")).map_err(|e| e.to_string())?;
    let head = r.headers().map_err(|e| e.to_string())?.clone();
    let idx = |name: &str| head.iter().position(|h| h == name);
    let mut broken = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        for a in ["0.5", "0.7", "0.9"] {
            let get = |k: &str| idx(&format!("{k}_{a}")).and_then(|i| rec[i].parse::<f64>().ok());
            if let (Some(bl), Some(bh), Some(pl), Some(ph)) = (get("bpi_lo"), get("bpi_hi"), get("ppi_lo"), get("ppi_hi")) {
                broken += usize::from(!(bl <= pl && ph <= bh));
            }
        }
    }
    if broken > 0 {
        errs.push(format!("{broken} rows with PPI outside BPI"));
    }
    let msg = format!("PPI coverage {}; containment violations {broken}", parts.join(", "));
    if errs.is_empty() { Ok(msg) } else { Err(format!("{msg}; {}", errs.join("; "))) }
}

fn gaussian_prediction(mu: f64, s2: f64, time: f64, censored: bool) -> Prediction {
    Prediction::new(
        MixtureGrfn::single(Grfn::gaussian_limit(mu, s2).unwrap()),
        SurvivalRecord::new(format!("t{time}"), time, censored).unwrap(),
    )
}

fn c10_ipcw_oracles() -> Check {
    let mut worst: f64 = 0.0;
    // Subject 2 is censored at 2, so Ĝ = 1 before 2 and 1/2 from 2 on.
    let instances = [[(0.2, 0.5, 1.0, false), (0.6, 0.3, 2.0, true), (1.1, 0.8, 3.0, false)], [
        (-0.3, 0.4, 0.5, false),
        (0.1, 0.9, 2.0, true),
        (0.9, 0.2, 2.5, false),
    ]];
    for inst in instances {
        let set = PredictionSet::new(inst.iter().map(|&(m, v, t, c)| gaussian_prediction(m, v, t, c)).collect(), 0.1);
        let g = km_censoring(&set.records()).unwrap();
        for t in [1.5, 2.2] {
            let sv: Vec<f64> = (0..3).map(|i| set.survival(i, t).unwrap()).collect();
            let g_t = if t < 2.0 { 1.0 } else { 0.5 };
            let (mut bs, mut bl) = (0.0, 0.0);
            for (i, &(_, _, time, cens)) in inst.iter().enumerate() {
                if time <= t && !cens {
                    bs += sv[i] * sv[i];
                    bl += (1.0 - sv[i]).ln();
                } else if time > t {
                    bs += (1.0 - sv[i]).powi(2) / g_t;
                    bl += sv[i].ln() / g_t;
                }
            }
            worst = worst
                .max((brier_score(&set, &g, t).unwrap().value - bs / 3.0).abs())
                .max((bll(&set, &g, t).unwrap().value - bl / 3.0).abs());
        }
    }
    let mut r = rng(10);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let preds: Vec<Prediction> = (0..100)
        .map(|_| {
            let mu = r.random_range(-1.0..1.0);
            gaussian_prediction(mu, 0.3, (mu + noise.sample(&mut r)).exp(), false)
        })
        .collect();
    let set = PredictionSet::new(preds, 0.1);
    let g = km_censoring(&set.records()).unwrap();
    let mut worst_mse: f64 = 0.0;
    for t in [0.5, 1.0, 2.0] {
        let mse = (0..set.len())
            .map(|i| {
                let alive = if set.predictions[i].record.time > t { 1.0 } else { 0.0 };
                (alive - set.survival(i, t).unwrap()).powi(2)
            })
            .sum::<f64>()
            / set.len() as f64;
        worst_mse = worst_mse.max((brier_score(&set, &g, t).unwrap().value - mse).abs());
    }
    let msg = format!("hand instances max error {worst:.2e}; uncensored BS vs MSE {worst_mse:.2e}");
    if worst <= 1e-12 && worst_mse <= 1e-12 { Ok(msg) } else { Err(msg) }
}

fn csv_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).into_iter().flatten().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn pipeline(root: &Path) -> Result<(), String> {
    let d = root.join("data");
    let g = root.join("gmm");
    let t = root.join("train");
    run(&["synth", "--n", "120", "--seed", "3", "--out", s(&d)])?;
    run(&["fit-gmm", "--manifest", s(&d.join("manifest.json")), "--seed", "3", "--out", s(&g)])?;
    let emb = g.join("embeddings.json");
    run(&["train", "--embeddings", s(&emb), "--prototypes", s(&g.join("patch_prototypes.json")), "--seed", "3", "--out", s(&t)])?;
    let model = t.join("model.json");
    run(&["predict", "--model", s(&model), "--embeddings", s(&emb), "--out", s(&root.join("predict"))])?;
    run(&["evaluate", "--model", s(&model), "--embeddings", s(&emb), "--out", s(&root.join("evaluate"))])?;
    run(&["crossval", "--manifest", s(&d.join("manifest.json")), "--folds", "3", "--seed", "3", "--out", s(&root.join("crossval"))])
}

fn c11_reproducibility(work: &Path) -> Check {
    let (a, b) = (work.join("run_a"), work.join("run_b"));
    pipeline(&a)?;
    pipeline(&b)?;
    let files = csv_files(&a);
    if files != csv_files(&b) {
        return Err("the two runs wrote different CSV file sets".into());
    }
    let differing: Vec<String> = files
        .iter()
        .filter(|f| std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok())
        .map(|f| f.display().to_string())
        .collect();
    let msg = format!("{} CSV files compared, {} differ", files.len(), differing.len());
    if differing.is_empty() && !files.is_empty() { Ok(msg) } else { Err(format!("{msg}: {}", differing.join(", "))) }
}

fn main() {
    let work = tempfile::tempdir().expect("temporary directory");
    let w = work.path();
    let criteria: Vec<Criterion> = vec![
        (1, "GRFN closed form vs Monte Carlo", Duration::from_secs(60), Box::new(c1_closed_form_vs_monte_carlo)),
        (2, "half-line identity", Duration::from_secs(1), Box::new(c2_halfline_identity)),
        (3, "Gaussian degeneration", Duration::from_secs(1), Box::new(c3_gaussian_degeneration)),
        (4, "vacuity", Duration::from_secs(1), Box::new(c4_vacuity)),
        (5, "EM monotonicity", Duration::from_secs(30), Box::new(c5_em)),
        (6, "gradient check", Duration::from_secs(120), Box::new(c6_grad_check)),
        (7, "loss decomposition", Duration::from_secs(10), Box::new(c7_loss_decomposition)),
        (8, "synthetic discrimination", Duration::from_secs(600), Box::new(move || c8_discrimination(w))),
        (9, "synthetic calibration", Duration::from_secs(600), Box::new(move || c9_calibration(w))),
        (10, "IPCW metric oracles", Duration::from_secs(1), Box::new(c10_ipcw_oracles)),
        (11, "reproducibility", Duration::from_secs(1200), Box::new(move || c11_reproducibility(w))),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(m) if elapsed <= budget => (true, m),
            Ok(m) => (false, format!("{m}; over the {}s budget", budget.as_secs())),
            Err(m) => (false, m),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {id:>2} {}: {name}: {detail} ({:.2}s)",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
