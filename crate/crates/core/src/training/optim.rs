use std::time::Instant;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::loss::{batch_terms, loss_and_gradient};
use super::{init_bank, quantile_bins, validate_dataset, BinGrid, Sample, SurvivalRecord, TrainConfig, TrainError};
use crate::evidence::{ParamKind, PrototypeBank};
use crate::rng::{stream_rng, Stream};

/// Largest number of parameters compared by [`grad_check`].
pub const GRAD_CHECK_MAX_PARAMS: usize = 20;

/// Adaptive-moment optimizer with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(len: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    /// One update; `decay[i]` selects which entries receive weight decay.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64, decay: &[bool]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            if decay[i] {
                params[i] *= 1.0 - lr * weight_decay;
            }
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Cosine-decayed step size for 0-based step `s` out of `total`.
pub(crate) fn cosine_lr(base: f64, s: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    base * 0.5 * (1.0 + (std::f64::consts::PI * s as f64 / total as f64).cos())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bank: PrototypeBank,
    pub grid: BinGrid,
    pub log: Vec<TrainLogEntry>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

fn full_loss(data: &[Sample], bank: &PrototypeBank, grid: &BinGrid, cfg: &TrainConfig) -> Result<f64, TrainError> {
    let refs: Vec<&Sample> = data.iter().collect();
    Ok(batch_terms(&refs, bank, grid, cfg)?.total(cfg))
}

/// Bins from the training outcomes, evidential initialization, then
/// optimization of every prototype parameter.
pub fn train(train_set: &[Sample], val_set: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    validate_dataset(train_set)?;
    cfg.validate()?;
    let records: Vec<SurvivalRecord> = train_set.iter().map(|(_, r)| r.clone()).collect();
    let grid = quantile_bins(&records, cfg.bins)?;
    let bank = init_bank(train_set, cfg)?;
    train_from(bank, grid, train_set, val_set, cfg)
}

/// Optimizes a given bank on a fixed grid.
pub fn train_from(
    mut bank: PrototypeBank,
    grid: BinGrid,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    validate_dataset(train_set)?;
    cfg.validate()?;
    let start = Instant::now();
    let n = train_set.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let decay: Vec<bool> = bank
        .param_kinds()
        .iter()
        .map(|k| matches!(k, ParamKind::Coeff | ParamKind::Intercept))
        .collect();
    let mut opt = AdamW::new(bank.param_len());
    let mut params = bank.params();

    let val_loss = |b: &PrototypeBank| -> Result<Option<f64>, TrainError> {
        if val_set.is_empty() {
            Ok(None)
        } else {
            full_loss(val_set, b, &grid, cfg).map(Some)
        }
    };
    let mut log = vec![TrainLogEntry {
        epoch: 0,
        train_loss: full_loss(train_set, &bank, &grid, cfg)?,
        val_loss: val_loss(&bank)?,
        wall_time_s: start.elapsed().as_secs_f64(),
    }];
    let mut best = (log[0].val_loss.unwrap_or(f64::INFINITY), 0, bank.clone());

    let mut step = 0;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream_rng(cfg.seed, Stream::Shuffle, epoch as u64));
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, grad) = loss_and_gradient(&batch, &bank, &grid, cfg)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    subjects: batch.iter().map(|(_, r)| r.subject_id.clone()).collect(),
                });
            }
            let lr = cosine_lr(cfg.learning_rate, step, total_steps);
            opt.step(&mut params, &grad, lr, cfg.weight_decay, &decay);
            bank.set_params(&params);
            step += 1;
        }
        let entry = TrainLogEntry {
            epoch,
            train_loss: full_loss(train_set, &bank, &grid, cfg)?,
            val_loss: val_loss(&bank)?,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        if let Some(v) = entry.val_loss {
            if v < best.0 {
                best = (v, epoch, bank.clone());
            }
        }
        log.push(entry);
    }
    let (bank, best_epoch) = if val_set.is_empty() { (bank, cfg.epochs) } else { (best.2, best.1) };
    Ok(TrainOutcome { bank, grid, log, best_epoch })
}

/// Max relative error between `grad` and central differences of `f` over `indices`.
pub fn grad_check_fn(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], grad: &[f64], indices: &[usize], eps: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut p = params.to_vec();
    for &i in indices {
        p[i] = params[i] + eps;
        let up = f(&p);
        p[i] = params[i] - eps;
        let down = f(&p);
        p[i] = params[i];
        let fd = (up - down) / (2.0 * eps);
        let denom = grad[i].abs().max(fd.abs()).max(1e-8);
        worst = worst.max((grad[i] - fd).abs() / denom);
    }
    worst
}

/// Checks the analytic loss gradient of `bank` on `batch` against central
/// differences over at most [`GRAD_CHECK_MAX_PARAMS`] sampled parameters.
pub fn grad_check(
    bank: &PrototypeBank,
    batch: &[Sample],
    grid: &BinGrid,
    cfg: &TrainConfig,
    eps: f64,
) -> Result<f64, TrainError> {
    let refs: Vec<&Sample> = batch.iter().collect();
    let (_, grad) = loss_and_gradient(&refs, bank, grid, cfg)?;
    let len = bank.param_len();
    let mut indices: Vec<usize> = if len <= GRAD_CHECK_MAX_PARAMS {
        (0..len).collect()
    } else {
        let mut rng = stream_rng(cfg.seed, Stream::GradCheck, 0);
        index::sample(&mut rng, len, GRAD_CHECK_MAX_PARAMS).into_vec()
    };
    indices.sort_unstable();
    let params = bank.params();
    let mut probe = bank.clone();
    let f = |p: &[f64]| {
        probe.set_params(p);
        batch_terms(&refs, &probe, grid, cfg).map(|t| t.total(cfg)).unwrap_or(f64::NAN)
    };
    Ok(grad_check_fn(f, &params, &grad, &indices, eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_smoke_test() {
        let err = grad_check_fn(|p| p[0] * p[0], &[3.0], &[6.0], &[0], 1e-5);
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn adamw_first_step_moves_by_lr() {
        let mut opt = AdamW::new(2);
        let mut p = vec![1.0, -2.0];
        opt.step(&mut p, &[0.5, -3.0], 0.1, 0.0, &[false, false]);
        assert_abs_diff_eq!(p[0], 0.9, epsilon = 1e-6);
        assert_abs_diff_eq!(p[1], -1.9, epsilon = 1e-6);
    }

    #[test]
    fn decoupled_decay_only_where_selected() {
        let mut opt = AdamW::new(2);
        let mut p = vec![2.0, 2.0];
        opt.step(&mut p, &[0.0, 0.0], 0.1, 0.5, &[true, false]);
        assert_abs_diff_eq!(p[0], 2.0 * 0.95, epsilon = 1e-12);
        assert_eq!(p[1], 2.0);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(1.0, 0, 10), 1.0);
        assert_abs_diff_eq!(cosine_lr(1.0, 5, 10), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(cosine_lr(1.0, 10, 10), 0.0, epsilon = 1e-12);
    }
}
