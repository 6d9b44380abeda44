use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{ConfusionMatrix, ErrorStats};
use super::importance::inclusion_proportions;
use super::predict::predict_point;
use crate::dataset::{kfold_split, permute_columns, permute_response, ModelFrame};
use crate::error::{BartError, Result};
use crate::model::BartModel;
use crate::priors::Hyperparameters;
use crate::sampler::derive_seed;
use crate::stats::{mean, quantile, sd};

/// What a permutation test shuffles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovariateSpec {
    /// Named columns or factors, permuted jointly.
    Columns(Vec<String>),
    /// Every predictor column, jointly.
    All,
    /// The response (omnibus test).
    Response,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovTestResult {
    /// `pseudo_r2` or `misclassification`.
    pub statistic: String,
    pub observed: f64,
    pub nulls: Vec<f64>,
    pub p_value: f64,
    pub columns: Vec<String>,
}

/// In-sample Pseudo-R² (regression) or misclassification rate.
pub fn in_sample_statistic(model: &BartModel) -> f64 {
    let y = &model.meta.train_y;
    match &model.meta.train_prob {
        Some(prob) => {
            let cls: Vec<bool> = prob.iter().map(|&p| p >= model.meta.hyper.prob_rule_class).collect();
            ConfusionMatrix::from_labels(y, &cls).misclassification_rate()
        }
        None => ErrorStats::compute(y, &model.meta.train_fitted, mean(y)).pseudo_r2,
    }
}

/// Permutation test of whether the chosen covariates (or, for the omnibus
/// version, any covariate) carry predictive signal. The p-value is the
/// share of null builds whose statistic beats the observed one.
pub fn cov_importance_test(
    frame: &ModelFrame,
    hyper: &Hyperparameters,
    spec: &CovariateSpec,
    permutations: usize,
    seed: u64,
) -> Result<CovTestResult> {
    if permutations == 0 {
        return Err(BartError::arg("need at least one permutation"));
    }
    let columns: Vec<usize> = match spec {
        CovariateSpec::Columns(names) => {
            let mut cols = Vec::new();
            for name in names {
                cols.extend(frame.resolve_covariate(name)?);
            }
            cols.sort_unstable();
            cols.dedup();
            cols
        }
        CovariateSpec::All => (0..frame.p()).collect(),
        CovariateSpec::Response => Vec::new(),
    };
    let observed = in_sample_statistic(&BartModel::fit(frame, hyper, derive_seed(seed, 0))?);
    let nulls: Vec<Result<f64>> = (0..permutations)
        .into_par_iter()
        .map(|b| {
            let perm_seed = derive_seed(seed ^ 0xA5A5_A5A5, b as u64);
            let permuted = match spec {
                CovariateSpec::Response => permute_response(frame, perm_seed),
                _ => permute_columns(frame, &columns, perm_seed)?,
            };
            Ok(in_sample_statistic(&BartModel::fit(&permuted, hyper, derive_seed(seed, b as u64 + 1))?))
        })
        .collect();
    let nulls: Vec<f64> = nulls.into_iter().collect::<Result<_>>()?;
    let classification = frame.task.is_classification();
    let p_value = permutation_p_value(observed, &nulls, classification);
    Ok(CovTestResult {
        statistic: if classification { "misclassification" } else { "pseudo_r2" }.into(),
        observed,
        nulls,
        p_value,
        columns: columns.iter().map(|&c| frame.column_names[c].clone()).collect(),
    })
}

/// Share of nulls strictly greater than `observed`, or strictly smaller
/// when `lower_is_better`.
pub fn permutation_p_value(observed: f64, nulls: &[f64], lower_is_better: bool) -> f64 {
    let hits = nulls.iter().filter(|&&v| if lower_is_better { v < observed } else { v > observed }).count();
    hits as f64 / nulls.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSelectionConfig {
    pub permutations: usize,
    pub alpha: f64,
    /// Real-data builds whose inclusion proportions are averaged.
    pub reps_for_avg: usize,
    /// Tree count used for every build in the procedure.
    pub num_trees: usize,
}

impl Default for VarSelectionConfig {
    fn default() -> Self {
        VarSelectionConfig { permutations: 100, alpha: 0.05, reps_for_avg: 10, num_trees: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Local,
    GlobalMax,
    GlobalSe,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 3] = [SelectionMethod::Local, SelectionMethod::GlobalMax, SelectionMethod::GlobalSe];

    pub fn name(self) -> &'static str {
        match self {
            SelectionMethod::Local => "local",
            SelectionMethod::GlobalMax => "global_max",
            SelectionMethod::GlobalSe => "global_se",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSelectionResult {
    pub names: Vec<String>,
    pub real_props: Vec<f64>,
    /// One row per permutation.
    pub null_props: Vec<Vec<f64>>,
    pub local_thresholds: Vec<f64>,
    pub global_max_threshold: f64,
    pub global_se_multiplier: f64,
    pub global_se_thresholds: Vec<f64>,
    pub local: Vec<usize>,
    pub global_max: Vec<usize>,
    pub global_se: Vec<usize>,
}

impl VarSelectionResult {
    pub fn selected(&self, method: SelectionMethod) -> &[usize] {
        match method {
            SelectionMethod::Local => &self.local,
            SelectionMethod::GlobalMax => &self.global_max,
            SelectionMethod::GlobalSe => &self.global_se,
        }
    }

    pub fn selected_names(&self, method: SelectionMethod) -> Vec<String> {
        self.selected(method).iter().map(|&j| self.names[j].clone()).collect()
    }
}

/// Permutation-based variable selection: real inclusion proportions
/// (averaged over replicate builds) against null proportions from builds on
/// a permuted response, thresholded three ways.
pub fn var_selection(
    frame: &ModelFrame,
    hyper: &Hyperparameters,
    config: &VarSelectionConfig,
    seed: u64,
) -> Result<VarSelectionResult> {
    if config.permutations == 0 || config.reps_for_avg == 0 {
        return Err(BartError::arg("var selection needs at least one permutation and one replicate"));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(BartError::arg("alpha must lie in (0, 1)"));
    }
    let h = Hyperparameters { num_trees: config.num_trees, ..hyper.clone() };
    let p = frame.p();
    let real: Vec<Result<Vec<f64>>> = (0..config.reps_for_avg)
        .into_par_iter()
        .map(|r| Ok(inclusion_proportions(&BartModel::fit(frame, &h, derive_seed(seed, r as u64))?)))
        .collect();
    let real: Vec<Vec<f64>> = real.into_iter().collect::<Result<_>>()?;
    let real_props: Vec<f64> = (0..p).map(|j| mean(&real.iter().map(|v| v[j]).collect::<Vec<_>>())).collect();
    let nulls: Vec<Result<Vec<f64>>> = (0..config.permutations)
        .into_par_iter()
        .map(|b| {
            let permuted = permute_response(frame, derive_seed(seed ^ 0x7E57_7E57, b as u64));
            let fit_seed = derive_seed(seed, (config.reps_for_avg + b) as u64);
            Ok(inclusion_proportions(&BartModel::fit(&permuted, &h, fit_seed)?))
        })
        .collect();
    let null_props: Vec<Vec<f64>> = nulls.into_iter().collect::<Result<_>>()?;
    Ok(apply_thresholds(frame.column_names.clone(), real_props, null_props, config.alpha))
}

/// The three selection rules applied to given real and null proportions.
pub fn apply_thresholds(names: Vec<String>, real_props: Vec<f64>, null_props: Vec<Vec<f64>>, alpha: f64) -> VarSelectionResult {
    let p = real_props.len();
    let column = |j: usize| null_props.iter().map(|v| v[j]).collect::<Vec<f64>>();
    let local_thresholds: Vec<f64> = (0..p).map(|j| quantile(&column(j), 1.0 - alpha)).collect();
    let local = (0..p).filter(|&j| real_props[j] > local_thresholds[j] && real_props[j] > 0.0).collect();

    let maxima: Vec<f64> = null_props.iter().map(|v| v.iter().cloned().fold(0.0, f64::max)).collect();
    let global_max_threshold = quantile(&maxima, 1.0 - alpha);
    let global_max = (0..p).filter(|&j| real_props[j] > global_max_threshold).collect();

    // smallest C with every null row inside mean + C·sd, simultaneously,
    // for a (1 - alpha) share of the permutations
    let means: Vec<f64> = (0..p).map(|j| mean(&column(j))).collect();
    let sds: Vec<f64> = (0..p).map(|j| if null_props.len() > 1 { sd(&column(j)) } else { 0.0 }).collect();
    let mut needed: Vec<f64> = null_props
        .iter()
        .map(|row| {
            (0..p)
                .filter(|&j| sds[j] > 0.0)
                .map(|j| (row[j] - means[j]) / sds[j])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    needed.sort_by(f64::total_cmp);
    let rank = ((1.0 - alpha) * needed.len() as f64).ceil() as usize;
    let global_se_multiplier = needed[rank.clamp(1, needed.len()) - 1].max(0.0);
    let global_se_thresholds: Vec<f64> = (0..p).map(|j| means[j] + global_se_multiplier * sds[j]).collect();
    let global_se = (0..p).filter(|&j| real_props[j] > global_se_thresholds[j]).collect();

    VarSelectionResult {
        names,
        real_props,
        null_props,
        local_thresholds,
        global_max_threshold,
        global_se_multiplier,
        global_se_thresholds,
        local,
        global_max,
        global_se,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSelectionCvResult {
    /// `fold_scores[method][fold]`, methods in [`SelectionMethod::ALL`] order.
    pub fold_scores: Vec<Vec<f64>>,
    pub mean_scores: Vec<f64>,
    pub best_method: SelectionMethod,
    pub selected: Vec<String>,
}

/// Chooses among the three selection rules by held-out error: rmse for
/// regression, misclassification rate for classification.
pub fn var_selection_cv(
    frame: &ModelFrame,
    hyper: &Hyperparameters,
    config: &VarSelectionConfig,
    folds: usize,
    seed: u64,
) -> Result<VarSelectionCvResult> {
    let assignment = kfold_split(frame.n(), folds, seed)?;
    let classification = frame.task.is_classification();
    let per_fold: Vec<Result<Vec<f64>>> = (1..=folds)
        .into_par_iter()
        .map(|f| {
            let train = frame.subset_rows(&assignment.rows_not_in(f));
            let test = frame.subset_rows(&assignment.rows_in(f));
            let sel = var_selection(&train, hyper, config, derive_seed(seed, f as u64))?;
            SelectionMethod::ALL
                .iter()
                .map(|&method| {
                    let cols = sel.selected(method);
                    let pred = if cols.is_empty() {
                        vec![mean(&train.y); test.n()]
                    } else {
                        let model = BartModel::fit(&train.select_columns(cols), hyper, derive_seed(seed ^ 0xC5, f as u64))?;
                        predict_point(&model, &test.select_columns(cols))?
                    };
                    Ok(if classification {
                        let cls: Vec<bool> = pred.iter().map(|&p| p >= hyper.prob_rule_class).collect();
                        ConfusionMatrix::from_labels(&test.y, &cls).misclassification_rate()
                    } else {
                        ErrorStats::compute(&test.y, &pred, mean(&test.y)).rmse
                    })
                })
                .collect()
        })
        .collect();
    let per_fold: Vec<Vec<f64>> = per_fold.into_iter().collect::<Result<_>>()?;
    let fold_scores: Vec<Vec<f64>> = (0..3).map(|m| per_fold.iter().map(|s| s[m]).collect()).collect();
    let mean_scores: Vec<f64> = fold_scores.iter().map(|s| mean(s)).collect();
    let best = (0..3).min_by(|&a, &b| mean_scores[a].total_cmp(&mean_scores[b])).unwrap();
    let best_method = SelectionMethod::ALL[best];
    let full = var_selection(frame, hyper, config, derive_seed(seed, 0))?;
    Ok(VarSelectionCvResult { fold_scores, mean_scores, best_method, selected: full.selected_names(best_method) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_value_definition() {
        assert_eq!(permutation_p_value(0.5, &[0.6, 0.7, 0.9], false), 1.0);
        assert_eq!(permutation_p_value(0.5, &[0.1, 0.2, 0.5], false), 0.0);
        assert_eq!(permutation_p_value(0.2, &[0.1, 0.3], true), 0.5);
    }

    #[test]
    fn threshold_rules() {
        let names = vec!["a".into(), "b".into(), "c".into()];
        let nulls = vec![vec![0.3, 0.3, 0.4], vec![0.35, 0.3, 0.35], vec![0.32, 0.34, 0.34], vec![0.33, 0.33, 0.34]];
        let r = apply_thresholds(names, vec![0.6, 0.3, 0.1], nulls, 0.05);
        assert_eq!(r.local, vec![0]);
        assert_eq!(r.global_max, vec![0]);
        assert_eq!(r.global_se, vec![0]);
        // the multiplier covers every permutation at this alpha
        for row in &r.null_props {
            for j in 0..3 {
                assert!(row[j] <= r.global_se_thresholds[j] + 1e-12);
            }
        }
    }
}
