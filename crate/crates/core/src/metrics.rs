//! Discrimination and calibration metrics for survival predictions.

use serde::Serialize;
use thiserror::Error;

use crate::evidence::{risk_score, survival_function, EvidenceError};
use crate::grfn::{Grfn, GrfnError, MixtureGrfn};
use crate::training::SurvivalRecord;

pub const DEFAULT_GRID_POINTS: usize = 100;
const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("invalid metric input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Grfn(#[from] GrfnError),
}

/// Right-continuous step function with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
    value_before_first: f64,
}

impl StepFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, value_before_first: f64) -> Result<Self, MetricError> {
        let unit = |v: &f64| (0.0..=1.0).contains(v);
        if knots.len() != values.len()
            || knots.windows(2).any(|w| !(w[0] < w[1]))
            || !values.iter().all(unit)
            || !unit(&value_before_first)
        {
            return Err(MetricError::InvalidInput("malformed step function".into()));
        }
        Ok(Self { knots, values, value_before_first })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `f(t)`, right-continuous.
    pub fn eval(&self, t: f64) -> f64 {
        match self.knots.partition_point(|k| *k <= t) {
            0 => self.value_before_first,
            i => self.values[i - 1],
        }
    }

    /// Left limit `f(t⁻)`.
    pub fn eval_left(&self, t: f64) -> f64 {
        match self.knots.partition_point(|k| *k < t) {
            0 => self.value_before_first,
            i => self.values[i - 1],
        }
    }
}

/// Kaplan–Meier estimate of the censoring survival function `Ĝ`.
pub fn km_censoring(records: &[SurvivalRecord]) -> Result<StepFunction, MetricError> {
    if records.is_empty() {
        return Err(MetricError::InvalidInput("no records".into()));
    }
    let mut times: Vec<(f64, bool)> = records.iter().map(|r| (r.time, r.censored)).collect();
    times.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = times.len();
    let (mut knots, mut values) = (Vec::new(), Vec::new());
    let mut g = 1.0;
    let mut i = 0;
    while i < n {
        let t = times[i].0;
        let at_risk = n - i;
        let mut censored = 0;
        while i < n && times[i].0 == t {
            censored += usize::from(times[i].1);
            i += 1;
        }
        if censored > 0 {
            g *= 1.0 - censored as f64 / at_risk as f64;
            knots.push(t);
            values.push(g);
        }
    }
    StepFunction::new(knots, values, 1.0)
}

/// One subject's prediction: mixture evidence, ranking score and outcome.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub risk: f64,
    pub evidence: MixtureGrfn,
    pub record: SurvivalRecord,
}

impl Prediction {
    pub fn new(evidence: MixtureGrfn, record: SurvivalRecord) -> Self {
        Self { risk: risk_score(&evidence), evidence, record }
    }
}

#[derive(Debug, Clone)]
pub struct PredictionSet {
    pub predictions: Vec<Prediction>,
    pub lambda: f64,
}

impl PredictionSet {
    pub fn new(predictions: Vec<Prediction>, lambda: f64) -> Self {
        Self { predictions, lambda }
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn records(&self) -> Vec<SurvivalRecord> {
        self.predictions.iter().map(|p| p.record.clone()).collect()
    }

    pub fn survival(&self, i: usize, t: f64) -> Result<f64, MetricError> {
        Ok(survival_function(&self.predictions[i].evidence, t, self.lambda)?)
    }

    /// Default integration range `[min event time, max observed time]`.
    pub fn default_range(&self) -> Result<(f64, f64), MetricError> {
        let lo = self
            .predictions
            .iter()
            .filter(|p| p.record.is_event())
            .map(|p| p.record.time)
            .fold(f64::INFINITY, f64::min);
        let hi = self.predictions.iter().map(|p| p.record.time).fold(f64::NEG_INFINITY, f64::max);
        if !(lo < hi) {
            return Err(MetricError::Undefined("empty integration range".into()));
        }
        Ok((lo, hi))
    }
}

/// Harrell's concordance index over `(time, event, risk)` triples.
pub fn c_index_raw(times: &[f64], events: &[bool], risks: &[f64]) -> Result<f64, MetricError> {
    let n = times.len();
    if events.len() != n || risks.len() != n {
        return Err(MetricError::InvalidInput("length mismatch".into()));
    }
    let (mut score, mut pairs) = (0.0, 0usize);
    for i in 0..n {
        if !events[i] {
            continue;
        }
        for j in 0..n {
            if times[i] < times[j] {
                pairs += 1;
                score += if risks[i] > risks[j] {
                    1.0
                } else if risks[i] == risks[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    if pairs == 0 {
        return Err(MetricError::Undefined("no comparable pairs".into()));
    }
    Ok(score / pairs as f64)
}

pub fn c_index(preds: &PredictionSet) -> Result<f64, MetricError> {
    let times: Vec<f64> = preds.predictions.iter().map(|p| p.record.time).collect();
    let events: Vec<bool> = preds.predictions.iter().map(|p| p.record.is_event()).collect();
    let risks: Vec<f64> = preds.predictions.iter().map(|p| p.risk).collect();
    c_index_raw(&times, &events, &risks)
}

/// Metric value with its effective sample size and dropped-subject count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricValue {
    pub value: f64,
    pub n: usize,
    pub dropped: usize,
}

/// IPCW average of per-subject terms: `event_term(Ŝ)/Ĝ(T⁻)` for events with
/// `T ≤ t`, `survivor_term(Ŝ)/Ĝ(t)` for `T > t`, zero otherwise.
fn ipcw_at(
    preds: &PredictionSet,
    g: &StepFunction,
    t: f64,
    event_term: impl Fn(f64) -> f64,
    survivor_term: impl Fn(f64) -> f64,
) -> Result<MetricValue, MetricError> {
    let g_t = g.eval(t);
    let (mut sum, mut dropped) = (0.0, 0);
    for (i, p) in preds.predictions.iter().enumerate() {
        let rec = &p.record;
        if rec.time <= t && rec.is_event() {
            let w = g.eval_left(rec.time);
            if w <= 0.0 {
                dropped += 1;
                continue;
            }
            sum += event_term(preds.survival(i, t)?) / w;
        } else if rec.time > t {
            if g_t <= 0.0 {
                dropped += 1;
                continue;
            }
            sum += survivor_term(preds.survival(i, t)?) / g_t;
        }
    }
    let n = preds.len() - dropped;
    if n == 0 {
        return Err(MetricError::Undefined(format!("every subject dropped at t = {t}")));
    }
    Ok(MetricValue { value: sum / n as f64, n, dropped })
}

pub fn brier_score(preds: &PredictionSet, g: &StepFunction, t: f64) -> Result<MetricValue, MetricError> {
    ipcw_at(preds, g, t, |s| s * s, |s| (1.0 - s) * (1.0 - s))
}

/// Binomial log-likelihood at `t` (higher is better).
pub fn bll(preds: &PredictionSet, g: &StepFunction, t: f64) -> Result<MetricValue, MetricError> {
    ipcw_at(preds, g, t, |s| (1.0 - s).max(LOG_FLOOR).ln(), |s| s.max(LOG_FLOOR).ln())
}

fn integrate(
    t_lo: f64,
    t_hi: f64,
    n_grid: usize,
    mut f: impl FnMut(f64) -> Result<MetricValue, MetricError>,
) -> Result<MetricValue, MetricError> {
    if !(t_lo < t_hi) || n_grid < 2 {
        return Err(MetricError::InvalidInput(format!("bad integration range [{t_lo}, {t_hi}] with {n_grid} points")));
    }
    let step = (t_hi - t_lo) / (n_grid - 1) as f64;
    let (mut area, mut prev, mut n, mut dropped) = (0.0, None, usize::MAX, 0);
    for k in 0..n_grid {
        let t = if k == n_grid - 1 { t_hi } else { t_lo + step * k as f64 };
        let v = f(t)?;
        n = n.min(v.n);
        dropped = dropped.max(v.dropped);
        if let Some(p) = prev {
            area += 0.5 * (p + v.value) * step;
        }
        prev = Some(v.value);
    }
    Ok(MetricValue { value: area / (t_hi - t_lo), n, dropped })
}

pub fn ibs(preds: &PredictionSet, g: &StepFunction, t_lo: f64, t_hi: f64, n_grid: usize) -> Result<MetricValue, MetricError> {
    integrate(t_lo, t_hi, n_grid, |t| brier_score(preds, g, t))
}

/// Negated integrated binomial log-likelihood (lower is better).
pub fn ibll(preds: &PredictionSet, g: &StepFunction, t_lo: f64, t_hi: f64, n_grid: usize) -> Result<MetricValue, MetricError> {
    let v = integrate(t_lo, t_hi, n_grid, |t| bll(preds, g, t))?;
    Ok(MetricValue { value: -v.value, ..v })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IntervalKind {
    Bpi,
    Ppi,
}

/// Coverage of α-level intervals over the uncensored log-times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageCurve {
    pub kind: IntervalKind,
    pub alphas: Vec<f64>,
    /// `None` when every subject's interval at that level was unattainable.
    pub coverage: Vec<Option<f64>>,
    pub n_uncensored: usize,
    /// Subjects whose interval at that level could not be formed
    /// (unattainable belief level or entirely vacuous evidence).
    pub excluded: Vec<usize>,
}

/// Summarizing GRFN, `None` when every component is vacuous.
fn summary(m: &MixtureGrfn) -> Result<Option<Grfn>, MetricError> {
    match m.summarize() {
        Ok(g) => Ok(Some(g)),
        Err(GrfnError::VacuousCombination) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn calibration_coverage(preds: &PredictionSet, alphas: &[f64], kind: IntervalKind) -> Result<CoverageCurve, MetricError> {
    let events: Vec<_> = preds.predictions.iter().filter(|p| p.record.is_event()).collect();
    if events.is_empty() {
        return Err(MetricError::Undefined("no uncensored subjects".into()));
    }
    let summaries = events.iter().map(|p| summary(&p.evidence)).collect::<Result<Vec<_>, _>>()?;
    let mut coverage = Vec::with_capacity(alphas.len());
    let mut excluded = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let (mut hit, mut skipped) = (0usize, 0usize);
        for (p, g) in events.iter().zip(&summaries) {
            let Some(g) = g else {
                skipped += 1;
                continue;
            };
            let iv = match kind {
                IntervalKind::Ppi => g.ppi(alpha)?,
                IntervalKind::Bpi => match g.bpi(alpha) {
                    Ok(iv) => iv,
                    Err(GrfnError::UnattainableLevel { .. }) => {
                        skipped += 1;
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                },
            };
            hit += usize::from(iv.contains(p.record.time.ln()));
        }
        let counted = events.len() - skipped;
        coverage.push((counted > 0).then(|| hit as f64 / counted as f64));
        excluded.push(skipped);
    }
    Ok(CoverageCurve { kind, alphas: alphas.to_vec(), coverage, n_uncensored: events.len(), excluded })
}

/// Number of `(subject, α)` pairs, over all subjects, whose PPI is not
/// contained in the corresponding BPI. Unattainable BPIs are skipped.
pub fn ppi_outside_bpi(preds: &PredictionSet, alphas: &[f64]) -> Result<usize, MetricError> {
    let mut violations = 0;
    for p in &preds.predictions {
        let Some(g) = summary(&p.evidence)? else { continue };
        for &alpha in alphas {
            let bpi = match g.bpi(alpha) {
                Ok(iv) => iv,
                Err(GrfnError::UnattainableLevel { .. }) => continue,
                Err(e) => return Err(e.into()),
            };
            violations += usize::from(!bpi.contains_interval(&g.ppi(alpha)?));
        }
    }
    Ok(violations)
}

/// A flat report row: metric name, value, effective n, dropped subjects.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: String,
    pub value: f64,
    pub n: usize,
    pub dropped: usize,
}

/// Standard evaluation table: C-index, IBS and IBLL over the default range.
pub fn evaluate_all(preds: &PredictionSet, n_grid: usize) -> Result<Vec<MetricRow>, MetricError> {
    let g = km_censoring(&preds.records())?;
    let (lo, hi) = preds.default_range()?;
    let ci = c_index(preds)?;
    let ibs_v = ibs(preds, &g, lo, hi, n_grid)?;
    let ibll_v = ibll(preds, &g, lo, hi, n_grid)?;
    let row = |metric: &str, v: MetricValue| MetricRow { metric: metric.into(), value: v.value, n: v.n, dropped: v.dropped };
    Ok(vec![
        row("c_index", MetricValue { value: ci, n: preds.len(), dropped: 0 }),
        row("ibs", ibs_v),
        row("ibll", ibll_v),
    ])
}
