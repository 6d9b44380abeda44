//! Gibbs sampling over the sum-of-trees model.
//!
//! Each chain owns its trees, residuals and RNG; chains run independently
//! (in parallel under rayon) and their kept draws are concatenated in
//! chain order, so results depend only on the seed list.

mod chain;
pub mod draws;
pub mod likelihood;
pub mod proposals;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use chain::{ChainState, IterationDiagnostics};
pub use draws::{draw_latent, draw_latent_z, draw_leaf, draw_sigma_sq, leaf_posterior, truncated_standard_normal};
pub use likelihood::log_node_marginal_likelihood;
pub use proposals::{
    change_ratios, evaluate_change, evaluate_grow, evaluate_prune, grow_ratios, prune_ratios, ChangeSide, GrowCounts,
    MoveContext, ProposalEvaluation, ProposalKind, PruneCounts,
};

use crate::dataset::ModelFrame;
use crate::error::{BartError, Result};
use crate::priors::{CalibratedPriors, Hyperparameters};
use crate::stats::normal_cdf;
use crate::tree::{predict_slice, FrozenNode, FrozenTree, Tree};

/// Debug and verification switches. All off by default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerOptions {
    /// Drop the likelihood from every acceptance ratio.
    pub ignore_likelihood: bool,
    /// Hold σ² at this value instead of drawing it.
    pub fixed_sigma_sq: Option<f64>,
    /// Recompute residuals from scratch after every iteration.
    pub check_residuals: bool,
    /// Keep every proposal evaluation for audit.
    pub record_proposals: bool,
    /// Print iteration counts to standard error.
    pub progress: bool,
}

/// Stream `stream` of a master seed (splitmix64 of an offset master).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One kept posterior draw: all m trees plus σ².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub sigma_sq: f64,
    /// `offsets[t]..offsets[t + 1]` are the nodes of tree t.
    pub offsets: Vec<u32>,
    pub nodes: Vec<FrozenNode>,
}

impl PosteriorSample {
    pub fn from_trees(trees: &[Tree], sigma_sq: f64) -> Self {
        let mut offsets = Vec::with_capacity(trees.len() + 1);
        let mut nodes = Vec::new();
        offsets.push(0);
        for t in trees {
            nodes.extend(t.freeze().nodes);
            offsets.push(nodes.len() as u32);
        }
        PosteriorSample { sigma_sq, offsets, nodes }
    }

    pub fn num_trees(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn tree_nodes(&self, t: usize) -> &[FrozenNode] {
        &self.nodes[self.offsets[t] as usize..self.offsets[t + 1] as usize]
    }

    pub fn tree(&self, t: usize) -> FrozenTree {
        FrozenTree { nodes: self.tree_nodes(t).to_vec() }
    }

    /// Sum-of-trees value at `x`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        (0..self.num_trees()).map(|t| predict_slice(self.tree_nodes(t), x)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub chain: usize,
    pub burn_in: usize,
    /// Burn-in iterations first, then kept ones.
    pub iterations: Vec<IterationDiagnostics>,
}

/// Kept draws of all chains plus their traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEnsemble {
    pub samples: Vec<PosteriorSample>,
    pub traces: Vec<ChainTrace>,
    pub kept_per_chain: usize,
}

/// A proposal evaluation tagged with where it happened.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub chain: usize,
    pub iteration: usize,
    pub tree: usize,
    #[serde(flatten)]
    pub evaluation: ProposalEvaluation,
}

pub struct GibbsOutput {
    pub ensemble: PosteriorEnsemble,
    pub proposals: Vec<ProposalRecord>,
    /// Posterior mean of the sum of trees at each training row.
    pub fitted_mean: Vec<f64>,
    /// Classification only: posterior mean of Φ(sum of trees).
    pub fitted_prob: Option<Vec<f64>>,
}

struct ChainOutput {
    samples: Vec<PosteriorSample>,
    trace: ChainTrace,
    proposals: Vec<ProposalRecord>,
    fit_sum: Vec<f64>,
    prob_sum: Option<Vec<f64>>,
}

/// Runs one chain per seed. Each runs `burn_in + ceil(post_burn_in /
/// chains)` iterations; the concatenated kept draws are truncated to
/// `post_burn_in`.
pub fn run_gibbs(
    frame: &ModelFrame,
    hyper: &Hyperparameters,
    priors: &CalibratedPriors,
    seeds: &[u64],
    options: SamplerOptions,
) -> Result<GibbsOutput> {
    hyper.validate()?;
    if seeds.len() != hyper.chains {
        return Err(BartError::arg(format!("{} seeds given for {} chains", seeds.len(), hyper.chains)));
    }
    let kept = hyper.kept_per_chain();
    let classification = frame.task.is_classification();
    let n = frame.n();
    let results: Vec<Result<ChainOutput>> = seeds
        .par_iter()
        .enumerate()
        .map(|(c, &seed)| {
            let mut state = ChainState::new(frame, hyper, priors, seed, options)?;
            let total = hyper.burn_in + kept;
            // draws of this chain that survive the final truncation
            let retained = hyper.post_burn_in.saturating_sub(c * kept).min(kept);
            let mut samples = Vec::with_capacity(retained);
            let mut iterations = Vec::with_capacity(total);
            let mut fit_sum = vec![0.0; n];
            let mut prob_sum = classification.then(|| vec![0.0; n]);
            for it in 0..total {
                iterations.push(state.iterate()?);
                if it >= hyper.burn_in && samples.len() < retained {
                    samples.push(state.snapshot());
                    let g = state.sum_of_trees();
                    for (acc, v) in fit_sum.iter_mut().zip(&g) {
                        *acc += v;
                    }
                    if let Some(ps) = prob_sum.as_mut() {
                        for (acc, v) in ps.iter_mut().zip(&g) {
                            *acc += normal_cdf(*v);
                        }
                    }
                }
                if options.progress && ((it + 1) % 100 == 0 || it + 1 == total) {
                    eprintln!("chain {}: iteration {}/{}", c + 1, it + 1, total);
                }
            }
            let proposals = state
                .take_proposal_log()
                .into_iter()
                .map(|(iteration, tree, evaluation)| ProposalRecord { chain: c, iteration, tree, evaluation })
                .collect();
            let trace = ChainTrace { chain: c, burn_in: hyper.burn_in, iterations };
            Ok(ChainOutput { samples, trace, proposals, fit_sum, prob_sum })
        })
        .collect();
    let mut samples = Vec::with_capacity(hyper.post_burn_in);
    let mut traces = Vec::with_capacity(seeds.len());
    let mut proposals = Vec::new();
    let mut fitted_mean = vec![0.0; n];
    let mut fitted_prob = classification.then(|| vec![0.0; n]);
    for r in results {
        let out = r?;
        samples.extend(out.samples);
        traces.push(out.trace);
        proposals.extend(out.proposals);
        for (a, v) in fitted_mean.iter_mut().zip(&out.fit_sum) {
            *a += v;
        }
        if let (Some(acc), Some(ps)) = (fitted_prob.as_mut(), out.prob_sum.as_ref()) {
            for (a, v) in acc.iter_mut().zip(ps) {
                *a += v;
            }
        }
    }
    let s = samples.len() as f64;
    fitted_mean.iter_mut().for_each(|v| *v /= s);
    if let Some(p) = fitted_prob.as_mut() {
        p.iter_mut().for_each(|v| *v /= s);
    }
    Ok(GibbsOutput {
        ensemble: PosteriorEnsemble { samples, traces, kept_per_chain: kept },
        proposals,
        fitted_mean,
        fitted_prob,
    })
}
