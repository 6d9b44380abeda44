use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ModelFrame;
use crate::error::{BartError, Result};
use crate::model::BartModel;
use crate::stats::{mean, quantile};

/// Percentiles of the training values at which the curve is evaluated.
pub const PDP_LEVELS: [f64; 11] = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdpPoint {
    pub level: f64,
    pub value: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpResult {
    pub feature: String,
    pub points: Vec<PdpPoint>,
}

/// Partial dependence of the sum of trees on column `feature`, averaging
/// over the rows of `frame` (normally the training data). The band is the
/// 2.5% and 97.5% quantiles of the per-sample curves. Classification
/// output stays on the probit scale.
pub fn partial_dependence(model: &BartModel, frame: &ModelFrame, feature: usize) -> Result<PdpResult> {
    model.check_frame(frame)?;
    if feature >= frame.p() {
        return Err(BartError::arg(format!("feature index {feature} out of range")));
    }
    let present: Vec<f64> = frame.columns[feature].iter().copied().filter(|v| !v.is_nan()).collect();
    if present.is_empty() {
        return Err(BartError::data("feature has no observed values"));
    }
    let grid: Vec<f64> = PDP_LEVELS.iter().map(|&l| quantile(&present, l)).collect();
    if grid.iter().all(|&v| v == grid[0]) {
        return Err(BartError::data(format!("feature `{}` is constant over its percentile grid", frame.column_names[feature])));
    }
    let rows: Vec<Vec<f64>> = (0..frame.n()).map(|i| frame.row(i)).collect();
    let points = PDP_LEVELS
        .iter()
        .zip(&grid)
        .map(|(&level, &value)| {
            let per_sample: Vec<f64> = model
                .samples()
                .par_iter()
                .map(|s| {
                    let mut x = vec![0.0; frame.p()];
                    let mut total = 0.0;
                    for row in &rows {
                        x.copy_from_slice(row);
                        x[feature] = value;
                        total += s.predict(&x);
                    }
                    total / rows.len() as f64
                })
                .collect();
            PdpPoint {
                level,
                value,
                estimate: mean(&per_sample),
                lower: quantile(&per_sample, 0.025),
                upper: quantile(&per_sample, 0.975),
            }
        })
        .collect();
    Ok(PdpResult { feature: frame.column_names[feature].clone(), points })
}
