//! Quantile binning, the mixture evidential loss, bank initialization and
//! optimization of the prototype bank.

mod bins;
mod init;
mod loss;
mod optim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::{EvidenceError, DEFAULT_LAMBDA};
use crate::gmm::{GmmError, SlideEmbedding};

pub use bins::{quantile_bins, BinGrid};
pub use init::{init_bank, H_INIT_SCALE, GAMMA_DISTANCE_FLOOR, VARIANCE_INIT_FLOOR};
pub use loss::{
    loss_and_gradient, mixture_evidential_loss, nll_subject, nll_uncensored, DataTerms, PROBABILITY_FLOOR,
};
pub use optim::{
    grad_check, grad_check_fn, train, train_from, AdamW, TrainLogEntry, TrainOutcome, GRAD_CHECK_MAX_PARAMS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid survival record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("need at least {needed} distinct uncensored times, found {found}")]
    TooFewUncensored { needed: usize, found: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("component {0} has no samples with positive occupancy")]
    EmptyComponent(usize),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (subjects {subjects:?})")]
    NonFiniteLoss { epoch: usize, batch: usize, subjects: Vec<String> },
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Gmm(#[from] GmmError),
}

/// Observed survival outcome of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub subject_id: String,
    pub time: f64,
    /// `true` when the subject is right-censored at `time`.
    pub censored: bool,
}

impl SurvivalRecord {
    pub fn new(subject_id: impl Into<String>, time: f64, censored: bool) -> Result<Self, TrainError> {
        let rec = Self { subject_id: subject_id.into(), time, censored };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.time.is_finite() && self.time > 0.0) {
            return Err(TrainError::InvalidRecord {
                id: self.subject_id.clone(),
                reason: format!("time {} is not finite and positive", self.time),
            });
        }
        Ok(())
    }

    pub fn is_event(&self) -> bool {
        !self.censored
    }
}

/// A training example: slide embedding plus outcome.
pub type Sample = (SlideEmbedding, SurvivalRecord);

/// Prototypes per component, either shared or listed per component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PrototypeCount {
    Uniform(usize),
    PerComponent(Vec<usize>),
}

impl PrototypeCount {
    pub fn for_component(&self, c: usize) -> usize {
        match self {
            Self::Uniform(k) => *k,
            Self::PerComponent(ks) => ks.get(c).copied().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub xi: f64,
    pub rho: f64,
    pub bins: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub tau: f64,
    pub k: PrototypeCount,
    pub weight_decay: f64,
    pub lambda_mix: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            xi: 0.01,
            rho: 0.01,
            bins: 4,
            learning_rate: 2e-4,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            tau: 0.01,
            k: PrototypeCount::Uniform(2),
            weight_decay: 2e-4,
            lambda_mix: DEFAULT_LAMBDA,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) || !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad("xi and rho must be finite and nonnegative".into());
        }
        if self.bins == 0 {
            return bad("bins must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be finite and nonnegative", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.tau) {
            return bad(format!("tau {} outside [0, 1)", self.tau));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be finite and nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.lambda_mix) {
            return bad(format!("lambda {} outside [0, 1]", self.lambda_mix));
        }
        match &self.k {
            PrototypeCount::Uniform(0) => return bad("K must be at least 1".into()),
            PrototypeCount::PerComponent(ks) if ks.is_empty() || ks.contains(&0) => {
                return bad("every per-component K must be at least 1".into())
            }
            _ => {}
        }
        Ok(())
    }
}

pub(crate) fn validate_dataset(data: &[Sample]) -> Result<(), TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for (emb, rec) in data {
        rec.validate()?;
        emb.validate()?;
    }
    Ok(())
}
