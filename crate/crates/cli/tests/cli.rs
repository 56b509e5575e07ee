use std::path::Path;
use std::process::{Command, Output};

use dpsurv_core::data_io::{load_model, read_embedding, read_embedding_set, read_manifest};
use dpsurv_core::training::init_bank;

fn dpsurv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpsurv")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = dpsurv(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let head = r.headers().unwrap().iter().map(String::from).collect();
    let body = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (head, body)
}

fn col(head: &[String], name: &str) -> usize {
    head.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn small_pipeline(dir: &Path, components: usize) {
    let d = dir.join("d");
    ok(&["synth", "--n", "40", "--dim", "6", "--patches", "30-50", "--seed", "5", "--out", p(&d)]);
    let g = dir.join("g");
    let c = components.to_string();
    ok(&["fit-gmm", "--manifest", p(&d.join("manifest.json")), "--components", &c, "--out", p(&g)]);
}

#[test]
fn missing_out_is_a_usage_error() {
    let out = dpsurv(&["synth", "--n", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
}

#[test]
fn bad_input_exits_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = dpsurv(&["fit-gmm", "--manifest", p(&dir.path().join("nope.json")), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn synth_writes_a_reproducible_cohort() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["synth", "--n", "50", "--dim", "8", "--components", "3", "--seed", "7", "--out", p(out)]);
    }
    let manifest = read_manifest(a.join("manifest.json")).unwrap();
    assert_eq!(manifest.subjects.len(), 50);
    for e in &manifest.subjects {
        let rel = Path::new(&e.embedding_path);
        assert_eq!(std::fs::read(a.join(rel)).unwrap(), std::fs::read(b.join(rel)).unwrap());
    }
    for f in ["manifest.json", "truth.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    assert!(a.join("config.json").exists());
}

#[test]
fn one_component_embeddings_are_patch_means() {
    let dir = tempfile::tempdir().unwrap();
    small_pipeline(dir.path(), 1);
    let d = dir.path().join("d");
    let manifest = read_manifest(d.join("manifest.json")).unwrap();
    let set = read_embedding_set(dir.path().join("g/embeddings.json")).unwrap();
    for (entry, slide) in manifest.subjects.iter().zip(&set.slides) {
        let patches = read_embedding(manifest.embedding_path(entry)).unwrap();
        let (mean, _) = patches.column_moments();
        let comp = &slide.embedding.components[0];
        assert!((comp.weight - 1.0).abs() < 1e-12);
        for (a, b) in comp.mean.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn fit_gmm_outputs_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    small_pipeline(dir.path(), 3);
    let manifest = read_manifest(dir.path().join("d/manifest.json")).unwrap();
    for e in &manifest.subjects {
        let patches = read_embedding(manifest.embedding_path(e)).unwrap();
        let (head, body) = rows(&dir.path().join(format!("g/assignments/{}.csv", e.subject_id)));
        assert_eq!(head, ["patch_index", "component"]);
        assert_eq!(body.len(), patches.n_patches());
        assert!(body.iter().all(|r| r[1].parse::<usize>().unwrap() < 3));
    }
    let (_, log) = rows(&dir.path().join("g/em_log.csv"));
    for w in log.windows(2) {
        if w[0][0] == w[1][0] {
            let (a, b): (f64, f64) = (w[0][2].parse().unwrap(), w[1][2].parse().unwrap());
            assert!(b >= a - 1e-8, "{}: {a} -> {b}", w[0][0]);
        }
    }
}

#[test]
fn train_predict_evaluate_round() {
    let dir = tempfile::tempdir().unwrap();
    small_pipeline(dir.path(), 3);
    let g = dir.path().join("g");
    let (emb, protos) = (g.join("embeddings.json"), g.join("patch_prototypes.json"));
    let t0 = dir.path().join("t0");
    ok(&["train", "--embeddings", p(&emb), "--prototypes", p(&protos), "--epochs", "0", "--out", p(&t0)]);
    let t = dir.path().join("t");
    ok(&["train", "--embeddings", p(&emb), "--prototypes", p(&protos), "--out", p(&t)]);
    let log = std::fs::read_to_string(t.join("train_log.jsonl")).unwrap();
    let losses: Vec<f64> = log
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["train_loss"].as_f64().unwrap())
        .collect();
    assert_eq!(losses.len(), 51);
    assert!(losses[50] < losses[1]);
    assert_eq!(std::fs::read_to_string(t0.join("train_log.jsonl")).unwrap().lines().count(), 1);
    let (init, _, cfg0) = load_model(t0.join("model.json")).unwrap();
    let samples = read_embedding_set(&emb).unwrap().samples();
    assert_eq!(init, init_bank(&samples, &cfg0).unwrap());

    let model = t.join("model.json");
    let (pa, pb) = (dir.path().join("pa"), dir.path().join("pb"));
    for (out, lam) in [(&pa, "0"), (&pb, "1")] {
        ok(&["predict", "--model", p(&model), "--embeddings", p(&emb), "--lambda", lam, "--out", p(out)]);
    }
    let (head, a) = rows(&pa.join("predictions.csv"));
    let (_, b) = rows(&pb.join("predictions.csv"));
    for (ra, rb) in a.iter().zip(&b) {
        for (i, h) in head.iter().enumerate() {
            if !h.starts_with("surv_t") {
                assert_eq!(ra[i], rb[i], "column {h}");
            } else {
                assert!(ra[i].parse::<f64>().unwrap() >= rb[i].parse::<f64>().unwrap());
            }
        }
    }
    for r in &a {
        let f = |name: &str| r[col(&head, name)].parse::<f64>().unwrap();
        assert!(f("bpi_lo_0.9") <= f("ppi_lo_0.9") && f("ppi_hi_0.9") <= f("bpi_hi_0.9"));
        let rr: Vec<f64> = (1..=3).map(|c| f(&format!("rr_{c}"))).collect();
        assert!(rr.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(rr.contains(&1.0) && rr.contains(&0.0));
    }

    let ev = dir.path().join("ev");
    ok(&["evaluate", "--model", p(&model), "--embeddings", p(&emb), "--out", p(&ev)]);
    let (mh, m) = rows(&ev.join("metrics.csv"));
    assert_eq!(mh, ["metric", "value", "n", "dropped", "note"]);
    assert_eq!(m.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["c_index", "ibs", "ibll"]);
    let (ch, cal) = rows(&ev.join("calibration.csv"));
    assert_eq!(ch, ["alpha", "bpi_coverage", "ppi_coverage", "n_uncensored"]);
    for w in cal.windows(2) {
        for (a, b) in w[0][1..3].iter().zip(&w[1][1..3]) {
            assert!(b.parse::<f64>().unwrap() >= a.parse::<f64>().unwrap());
        }
    }
    let cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(t.join("config.json")).unwrap()).unwrap();
    let train_cfg = &cfg["resolved"]["train_config"];
    for key in ["alpha", "xi", "rho", "bins", "learning_rate", "epochs", "batch_size", "seed", "tau", "k", "weight_decay", "lambda_mix"] {
        assert!(!train_cfg[key].is_null(), "missing {key}");
    }
}

#[test]
fn oracle_occupancy_ranks_the_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    ok(&["synth", "--n", "100", "--dim", "4", "--patches", "10", "--noise-sd", "0", "--censor-rate", "0", "--out", p(&d)]);
    let truth: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("truth.json")).unwrap()).unwrap();
    let coeffs: Vec<f64> = truth["risk_coeffs"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let subjects = truth["subjects"].as_array().unwrap();
    let times: Vec<f64> = subjects.iter().map(|s| s["observed_time"].as_f64().unwrap()).collect();
    let risks: Vec<f64> = subjects
        .iter()
        .map(|s| {
            let occ = s["occupancy"].as_array().unwrap();
            -occ.iter().zip(&coeffs).map(|(o, b)| o.as_f64().unwrap() * b).sum::<f64>()
        })
        .collect();
    let c = dpsurv_core::metrics::c_index_raw(&times, &vec![true; times.len()], &risks).unwrap();
    assert!(c >= 0.99, "{c}");
}
