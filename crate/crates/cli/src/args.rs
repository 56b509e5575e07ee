use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dpsurv_core::training::{PrototypeCount, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "dpsurv", version, about = "Evidential survival analysis on slide embeddings")]
pub struct Cli {
    /// Worker threads for per-slide work (default: available parallelism).
    #[arg(long, global = true, env = "DPSURV_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort with known ground truth.
    Synth(SynthArgs),
    /// Fit patch prototypes and per-slide mixtures, write slide embeddings.
    FitGmm(FitGmmArgs),
    /// Initialize and train the prototype bank.
    Train(TrainArgs),
    /// Per-subject survival predictions.
    Predict(PredictArgs),
    /// Discrimination and calibration metrics.
    Evaluate(EvaluateArgs),
    /// Seeded k-fold run of fit-gmm, train, predict and evaluate.
    Crossval(CrossvalArgs),
}

/// `N` or `MIN-MAX`.
fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    match s.split_once('-') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

fn parse_k(s: &str) -> Result<PrototypeCount, String> {
    let ks: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    Ok(if ks.len() == 1 { PrototypeCount::Uniform(ks[0]) } else { PrototypeCount::PerComponent(ks) })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 3)]
    pub components: usize,
    /// Patches per slide, `N` or `MIN-MAX`.
    #[arg(long, default_value = "128", value_parser = parse_range)]
    pub patches: (usize, usize),
    #[arg(long, default_value_t = 0.25)]
    pub censor_rate: f64,
    #[arg(long, default_value_t = 0.3)]
    pub noise_sd: f64,
    /// Occupancy-to-log-time coefficients (default: evenly spaced on [-1, 1]).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub risk_coeffs: Option<Vec<f64>>,
    /// Symmetric Dirichlet concentration of component occupancies.
    #[arg(long, default_value_t = 1.0)]
    pub concentration: f64,
    /// Scale of randomly drawn component means.
    #[arg(long, default_value_t = 3.0)]
    pub mean_scale: f64,
    /// Within-component patch standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub patch_sd: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GmmOpts {
    /// Mixture components per slide.
    #[arg(long, default_value_t = 3)]
    pub components: usize,
    /// Cap on pooled patches used to fit the patch prototypes.
    #[arg(long, default_value_t = 100_000)]
    pub sample_cap: usize,
    #[arg(long, default_value_t = 100)]
    pub kmeans_iter: usize,
    #[arg(long, default_value_t = 100)]
    pub em_max_iter: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub em_tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitGmmArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// File of subject ids (one per line) whose patches fit the prototypes;
    /// default every subject.
    #[arg(long)]
    pub train_ids: Option<PathBuf>,
    #[command(flatten)]
    pub gmm: GmmOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 2e-4)]
    pub wd: f64,
    #[arg(long, default_value_t = 0.01)]
    pub xi: f64,
    #[arg(long, default_value_t = 0.01)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.01)]
    pub tau: f64,
    /// Prototypes per component, one value or a comma-separated list.
    #[arg(long, default_value = "2", value_parser = parse_k)]
    pub k: PrototypeCount,
    #[arg(long, default_value_t = 4)]
    pub bins: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
}

impl TrainOpts {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            alpha: self.alpha,
            xi: self.xi,
            rho: self.rho,
            bins: self.bins,
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            seed,
            tau: self.tau,
            k: self.k.clone(),
            weight_decay: self.wd,
            lambda_mix: self.lambda,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Slide embeddings written by fit-gmm.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Patch prototypes written by fit-gmm, bundled into the model.
    #[arg(long)]
    pub prototypes: PathBuf,
    /// Optional validation embeddings for best-epoch selection.
    #[arg(long)]
    pub val_embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictOpts {
    /// Survival-curve times (default: the 10/30/50/70/90% quantiles of observed times).
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// Interval levels.
    #[arg(long, default_value = "0.5,0.7,0.9", value_delimiter = ',')]
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[command(flatten)]
    pub predict: PredictOpts,
    /// Override the model's belief/plausibility mix λ.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalOpts {
    /// Integration grid points for IBS and IBLL.
    #[arg(long, default_value_t = 100)]
    pub n_grid: usize,
    /// Coverage levels.
    #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9", value_delimiter = ',')]
    pub coverage_alphas: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[command(flatten)]
    pub eval: EvalOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CrossvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Fit patch prototypes once on every subject instead of per training fold.
    #[arg(long)]
    pub shared_prototypes: bool,
    #[command(flatten)]
    pub gmm: GmmOpts,
    #[command(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    pub predict: PredictOpts,
    #[command(flatten)]
    pub eval: EvalOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
