use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ModelFrame;
use crate::error::{BartError, Result};
use crate::model::BartModel;
use crate::sampler::derive_seed;
use crate::stats::{mean, normal_cdf, quantile};

/// Posterior draws of the sum of trees for each row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    /// `draws[i][s]` is sample s evaluated at row i.
    pub draws: Vec<Vec<f64>>,
    /// Posterior mean of the sum of trees (probit scale for classification).
    pub point: Vec<f64>,
    /// Classification: posterior mean of Φ(g).
    pub prob: Option<Vec<f64>>,
    /// Classification: `prob >= prob_rule_class`.
    pub is_positive: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalKind {
    Credible,
    Predictive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub lower: f64,
    pub upper: f64,
    pub conf: f64,
    pub kind: IntervalKind,
}

/// Sum-of-trees value of every kept sample at one row.
pub fn row_draws(model: &BartModel, x: &[f64]) -> Vec<f64> {
    model.samples().iter().map(|s| s.predict(x)).collect()
}

pub fn predict(model: &BartModel, frame: &ModelFrame) -> Result<PredictionResult> {
    model.check_frame(frame)?;
    let draws: Vec<Vec<f64>> = (0..frame.n()).into_par_iter().map(|i| row_draws(model, &frame.row(i))).collect();
    let point = draws.iter().map(|d| mean(d)).collect();
    let (prob, is_positive) = if model.is_classification() {
        let prob: Vec<f64> = draws.iter().map(|d| d.iter().map(|&g| normal_cdf(g)).sum::<f64>() / d.len() as f64).collect();
        let cls = prob.iter().map(|&p| p >= model.meta.hyper.prob_rule_class).collect();
        (Some(prob), Some(cls))
    } else {
        (None, None)
    };
    Ok(PredictionResult { draws, point, prob, is_positive })
}

/// Posterior mean prediction without keeping the draws: the regression
/// mean, or the mean probability for classification.
pub fn predict_point(model: &BartModel, frame: &ModelFrame) -> Result<Vec<f64>> {
    model.check_frame(frame)?;
    let classification = model.is_classification();
    Ok((0..frame.n())
        .into_par_iter()
        .map(|i| {
            let x = frame.row(i);
            let s = model.samples();
            let total: f64 = if classification {
                s.iter().map(|smp| normal_cdf(smp.predict(&x))).sum()
            } else {
                s.iter().map(|smp| smp.predict(&x)).sum()
            };
            total / s.len() as f64
        })
        .collect())
}

fn check_conf(conf: f64) -> Result<()> {
    if conf > 0.0 && conf < 1.0 {
        Ok(())
    } else {
        Err(BartError::arg("confidence level must lie in (0, 1)"))
    }
}

/// Equal-tailed quantile interval of the posterior draws at one row.
pub fn credible_interval(draws: &[f64], conf: f64) -> Result<IntervalEstimate> {
    check_conf(conf)?;
    let a = (1.0 - conf) / 2.0;
    Ok(IntervalEstimate { lower: quantile(draws, a), upper: quantile(draws, 1.0 - a), conf, kind: IntervalKind::Credible })
}

/// Quantile interval of `g_s + ε`, `ε ~ Normal(0, σ²_s)`, cycling through
/// the kept samples until `num_draws` values are made.
pub fn prediction_interval(
    model: &BartModel,
    draws: &[f64],
    conf: f64,
    num_draws: usize,
    seed: u64,
) -> Result<IntervalEstimate> {
    check_conf(conf)?;
    if model.is_classification() {
        return Err(BartError::Unsupported("prediction intervals do not exist for classification".into()));
    }
    if num_draws == 0 {
        return Err(BartError::arg("num_draws must be positive"));
    }
    let samples = model.samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..num_draws)
        .map(|k| {
            let s = k % samples.len();
            let e: f64 = StandardNormal.sample(&mut rng);
            draws[s] + samples[s].sigma_sq.sqrt() * e
        })
        .collect();
    let a = (1.0 - conf) / 2.0;
    Ok(IntervalEstimate {
        lower: quantile(&values, a),
        upper: quantile(&values, 1.0 - a),
        conf,
        kind: IntervalKind::Predictive,
    })
}

/// Intervals for every row; row i uses stream i of `seed` for its noise.
pub fn intervals(
    model: &BartModel,
    pred: &PredictionResult,
    kind: IntervalKind,
    conf: f64,
    num_draws: usize,
    seed: u64,
) -> Result<Vec<IntervalEstimate>> {
    pred.draws
        .par_iter()
        .enumerate()
        .map(|(i, d)| match kind {
            IntervalKind::Credible => credible_interval(d, conf),
            IntervalKind::Predictive => prediction_interval(model, d, conf, num_draws, derive_seed(seed, i as u64)),
        })
        .collect()
}
