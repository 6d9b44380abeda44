use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::predict::predict_point;
use crate::dataset::{kfold_split, ModelFrame};
use crate::error::{BartError, Result};
use crate::model::BartModel;
use crate::priors::Hyperparameters;
use crate::sampler::derive_seed;
use crate::stats::mean;

/// L1 = Σ|e|, L2 = Σe², rmse = √(L2/n), Pseudo-R² = 1 − L2/Σ(y − ȳ)².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub l1: f64,
    pub l2: f64,
    pub rmse: f64,
    pub pseudo_r2: f64,
}

impl ErrorStats {
    /// `ybar` is the centre for the total sum of squares.
    pub fn compute(y: &[f64], yhat: &[f64], ybar: f64) -> Self {
        let mut l1 = 0.0;
        let mut l2 = 0.0;
        let mut sst = 0.0;
        for (a, b) in y.iter().zip(yhat) {
            let e = a - b;
            l1 += e.abs();
            l2 += e * e;
            sst += (a - ybar).powi(2);
        }
        ErrorStats { l1, l2, rmse: (l2 / y.len() as f64).sqrt(), pseudo_r2: 1.0 - l2 / sst }
    }
}

/// Rows are true class, columns predicted class; index 0 = negative,
/// 1 = positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_labels(y: &[f64], predicted_positive: &[bool]) -> Self {
        let mut counts = [[0; 2]; 2];
        for (&t, &p) in y.iter().zip(predicted_positive) {
            counts[usize::from(t > 0.5)][usize::from(p)] += 1;
        }
        ConfusionMatrix { counts }
    }

    pub fn misclassification_rate(&self) -> f64 {
        let total: usize = self.counts.iter().flatten().sum();
        (self.counts[0][1] + self.counts[1][0]) as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Regression error statistics (absent for classification).
    pub stats: Option<ErrorStats>,
    pub confusion: Option<ConfusionMatrix>,
    /// Out-of-fold prediction per row (probability for classification).
    pub predictions: Vec<f64>,
    pub folds: Vec<usize>,
}

impl CvResult {
    /// The number minimized by grid search: rmse or misclassification rate.
    pub fn score(&self) -> f64 {
        match (&self.stats, &self.confusion) {
            (Some(s), _) => s.rmse,
            (None, Some(c)) => c.misclassification_rate(),
            _ => f64::NAN,
        }
    }
}

/// Out-of-fold predictions from `k` models, fold f trained on all other folds.
pub fn k_fold_cv(frame: &ModelFrame, hyper: &Hyperparameters, k: usize, seed: u64) -> Result<CvResult> {
    let folds = kfold_split(frame.n(), k, seed)?;
    let per_fold: Vec<Result<(Vec<usize>, Vec<f64>)>> = (1..=k)
        .into_par_iter()
        .map(|f| {
            let test_rows = folds.rows_in(f);
            let train = frame.subset_rows(&folds.rows_not_in(f));
            let test = frame.subset_rows(&test_rows);
            let model = BartModel::fit(&train, hyper, derive_seed(seed, f as u64))?;
            Ok((test_rows, predict_point(&model, &test)?))
        })
        .collect();
    let mut predictions = vec![f64::NAN; frame.n()];
    for r in per_fold {
        let (rows, preds) = r?;
        for (i, v) in rows.into_iter().zip(preds) {
            predictions[i] = v;
        }
    }
    Ok(summarize_predictions(frame, hyper, predictions, folds.fold_index))
}

fn summarize_predictions(frame: &ModelFrame, hyper: &Hyperparameters, predictions: Vec<f64>, folds: Vec<usize>) -> CvResult {
    if frame.task.is_classification() {
        let cls: Vec<bool> = predictions.iter().map(|&p| p >= hyper.prob_rule_class).collect();
        CvResult { stats: None, confusion: Some(ConfusionMatrix::from_labels(&frame.y, &cls)), predictions, folds }
    } else {
        let stats = ErrorStats::compute(&frame.y, &predictions, mean(&frame.y));
        CvResult { stats: Some(stats), confusion: None, predictions, folds }
    }
}

/// Hyperparameter grid; every combination is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvGrid {
    pub k: Vec<f64>,
    /// (ν, q) pairs; ignored for classification.
    pub nu_q: Vec<(f64, f64)>,
    pub num_trees: Vec<usize>,
}

impl Default for CvGrid {
    fn default() -> Self {
        CvGrid { k: vec![2.0, 3.0, 5.0], nu_q: vec![(3.0, 0.9), (3.0, 0.99), (10.0, 0.75)], num_trees: vec![50, 200] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub k: f64,
    pub nu: f64,
    pub q: f64,
    pub num_trees: usize,
    /// Out-of-fold rmse, or misclassification rate for classification.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub cells: Vec<GridCell>,
    pub best: usize,
    pub best_hyper: Hyperparameters,
}

pub fn cv_grid_search(
    frame: &ModelFrame,
    base: &Hyperparameters,
    grid: &CvGrid,
    folds: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    let nu_q = if frame.task.is_classification() { vec![(base.nu, base.q)] } else { grid.nu_q.clone() };
    let mut combos = Vec::new();
    for &k in &grid.k {
        for &(nu, q) in &nu_q {
            for &m in &grid.num_trees {
                combos.push((k, nu, q, m));
            }
        }
    }
    if combos.is_empty() {
        return Err(BartError::arg("cross-validation grid is empty"));
    }
    let cells: Vec<Result<GridCell>> = combos
        .par_iter()
        .map(|&(k, nu, q, m)| {
            let h = Hyperparameters { k, nu, q, num_trees: m, ..base.clone() };
            // the same folds for every cell
            let cv = k_fold_cv(frame, &h, folds, seed)?;
            Ok(GridCell { k, nu, q, num_trees: m, score: cv.score() })
        })
        .collect();
    let cells: Vec<GridCell> = cells.into_iter().collect::<Result<_>>()?;
    let best = (0..cells.len()).min_by(|&a, &b| cells[a].score.total_cmp(&cells[b].score)).unwrap();
    let c = &cells[best];
    let best_hyper = Hyperparameters { k: c.k, nu: c.nu, q: c.q, num_trees: c.num_trees, ..base.clone() };
    Ok(GridSearchResult { cells, best, best_hyper })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeCountRmse {
    pub num_trees: usize,
    pub mean_rmse: f64,
    pub replicate_rmse: Vec<f64>,
}

/// Holdout rmse (random 80/20 split per replicate) for each tree count.
pub fn rmse_by_num_trees(
    frame: &ModelFrame,
    hyper: &Hyperparameters,
    tree_counts: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<Vec<TreeCountRmse>> {
    if replicates == 0 {
        return Err(BartError::arg("replicates must be at least 1"));
    }
    if frame.task.is_classification() {
        return Err(BartError::Unsupported("rmse_by_num_trees is for regression".into()));
    }
    let n = frame.n();
    let n_test = (n / 5).max(1);
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..replicates)
        .map(|r| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64)));
            let test = order[..n_test].to_vec();
            let train = order[n_test..].to_vec();
            (train, test)
        })
        .collect();
    tree_counts
        .iter()
        .map(|&m| {
            let h = Hyperparameters { num_trees: m, ..hyper.clone() };
            let rm: Vec<Result<f64>> = splits
                .par_iter()
                .enumerate()
                .map(|(r, (train, test))| {
                    let tr = frame.subset_rows(train);
                    let te = frame.subset_rows(test);
                    let model = BartModel::fit(&tr, &h, derive_seed(seed ^ 0x5eed, r as u64))?;
                    let pred = predict_point(&model, &te)?;
                    Ok(ErrorStats::compute(&te.y, &pred, mean(&te.y)).rmse)
                })
                .collect();
            let replicate_rmse: Vec<f64> = rm.into_iter().collect::<Result<_>>()?;
            Ok(TreeCountRmse { num_trees: m, mean_rmse: mean(&replicate_rmse), replicate_rmse })
        })
        .collect()
}
