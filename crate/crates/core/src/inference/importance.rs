use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ModelFrame;
use crate::error::Result;
use crate::model::BartModel;
use crate::priors::Hyperparameters;
use crate::sampler::derive_seed;
use crate::stats::{mean, sd};

/// Number of splitting rules using each predictor, over all trees and
/// kept samples.
pub fn split_counts(model: &BartModel) -> Vec<u64> {
    let mut counts = vec![0u64; model.p()];
    for s in model.samples() {
        for node in &s.nodes {
            if !node.is_leaf() {
                counts[node.feature as usize] += 1;
            }
        }
    }
    counts
}

/// Share of all splitting rules that use each predictor; zeros when no
/// tree has split.
pub fn inclusion_proportions(model: &BartModel) -> Vec<f64> {
    let counts = split_counts(model);
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Counts of (parent rule feature, child rule feature) pairs between
/// internal nodes, with `(j,k)` and `(k,j)` summed off the diagonal.
pub fn interaction_counts(model: &BartModel) -> Vec<Vec<f64>> {
    let p = model.p();
    let mut raw = vec![vec![0.0; p]; p];
    for s in model.samples() {
        for t in 0..s.num_trees() {
            let nodes = s.tree_nodes(t);
            for (i, node) in nodes.iter().enumerate() {
                if node.is_leaf() {
                    continue;
                }
                for child in [i + 1, node.right as usize] {
                    let c = &nodes[child];
                    if !c.is_leaf() {
                        raw[node.feature as usize][c.feature as usize] += 1.0;
                    }
                }
            }
        }
    }
    fold_symmetric(&raw)
}

pub fn fold_symmetric(raw: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = raw.len();
    let mut out = vec![vec![0.0; p]; p];
    for j in 0..p {
        out[j][j] = raw[j][j];
        for k in 0..p {
            if j != k {
                out[j][k] = raw[j][k] + raw[k][j];
            }
        }
    }
    out
}

/// Per-feature mean over replicate builds with a ±2 standard-error band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicatedSummary {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub inclusion: ReplicatedSummary,
    /// Mean folded interaction counts over the replicates.
    pub interactions: Vec<Vec<f64>>,
    /// Standard deviation of each entry over the replicates.
    pub interactions_sd: Vec<Vec<f64>>,
}

fn summarize(names: &[String], per_rep: &[Vec<f64>]) -> ReplicatedSummary {
    let p = names.len();
    let r = per_rep.len();
    let mut out = ReplicatedSummary {
        names: names.to_vec(),
        mean: vec![0.0; p],
        lower: vec![0.0; p],
        upper: vec![0.0; p],
        replicates: r,
    };
    for j in 0..p {
        let col: Vec<f64> = per_rep.iter().map(|v| v[j]).collect();
        let m = mean(&col);
        let se = if r > 1 { sd(&col) / (r as f64).sqrt() } else { 0.0 };
        out.mean[j] = m;
        out.lower[j] = m - 2.0 * se;
        out.upper[j] = m + 2.0 * se;
    }
    out
}

/// Builds `replicates` models (seeds derived from `seed`) and averages their
/// inclusion proportions and interaction counts.
pub fn importance_report(frame: &ModelFrame, hyper: &Hyperparameters, replicates: usize, seed: u64) -> Result<ImportanceReport> {
    let replicates = replicates.max(1);
    let fits: Vec<Result<(Vec<f64>, Vec<Vec<f64>>)>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let model = BartModel::fit(frame, hyper, derive_seed(seed, r as u64))?;
            Ok((inclusion_proportions(&model), interaction_counts(&model)))
        })
        .collect();
    let fits: Vec<(Vec<f64>, Vec<Vec<f64>>)> = fits.into_iter().collect::<Result<_>>()?;
    let props: Vec<Vec<f64>> = fits.iter().map(|f| f.0.clone()).collect();
    let p = frame.p();
    let mut interactions = vec![vec![0.0; p]; p];
    let mut interactions_sd = vec![vec![0.0; p]; p];
    for j in 0..p {
        for k in 0..p {
            let vals: Vec<f64> = fits.iter().map(|f| f.1[j][k]).collect();
            interactions[j][k] = mean(&vals);
            interactions_sd[j][k] = if vals.len() > 1 { sd(&vals) } else { 0.0 };
        }
    }
    Ok(ImportanceReport { inclusion: summarize(&frame.column_names, &props), interactions, interactions_sd })
}

/// Largest off-diagonal entry of a symmetric matrix as `(j, k, value)`
/// with `j < k`.
pub fn top_interaction(m: &[Vec<f64>]) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for j in 0..m.len() {
        for k in j + 1..m.len() {
            if best.is_none_or(|b| m[j][k] > b.2) {
                best = Some((j, k, m[j][k]));
            }
        }
    }
    best
}
