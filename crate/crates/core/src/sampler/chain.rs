use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::draws::{draw_latent_z, draw_leaf, draw_sigma_sq};
use super::proposals::{evaluate_change, evaluate_grow, evaluate_prune, MoveContext, ProposalEvaluation, ProposalKind};
use super::{PosteriorSample, SamplerOptions};
use crate::dataset::ModelFrame;
use crate::error::{BartError, Result};
use crate::priors::{CalibratedPriors, Hyperparameters};
use crate::tree::{SplitIndex, Tree};

/// Per-iteration summary recorded by every chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub sigma_sq: f64,
    /// Fraction of the m tree proposals accepted in this iteration.
    pub acceptance: f64,
    pub mean_leaves: f64,
    pub mean_depth: f64,
}

/// Mutable state of one Gibbs chain.
pub struct ChainState<'a> {
    frame: &'a ModelFrame,
    index: SplitIndex<'a>,
    hyper: &'a Hyperparameters,
    priors: &'a CalibratedPriors,
    options: SamplerOptions,
    pub trees: Vec<Tree>,
    pub sigma_sq: f64,
    /// `target - Σ_t tree_t(X)` between tree updates, where the target is
    /// `y` (regression) or the latent `z` (classification).
    residuals: Vec<f64>,
    latent_z: Option<Vec<f64>>,
    rng: ChaCha8Rng,
    pub iteration: usize,
    proposal_log: Vec<(usize, usize, ProposalEvaluation)>,
}

impl<'a> ChainState<'a> {
    pub fn new(
        frame: &'a ModelFrame,
        hyper: &'a Hyperparameters,
        priors: &'a CalibratedPriors,
        seed: u64,
        options: SamplerOptions,
    ) -> Result<Self> {
        hyper.validate()?;
        if frame.n() == 0 {
            return Err(BartError::data("training frame has no rows"));
        }
        if frame.has_missing() && !frame.use_missing_data {
            return Err(BartError::data("frame has missing predictor values but missing-data support is off"));
        }
        let weights = hyper.covariate_weights(frame)?;
        let index = SplitIndex::new(frame, &weights, hyper.memcache)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = frame.n();
        let classification = frame.task.is_classification();
        let sigma_sq = if classification { 1.0 } else { options.fixed_sigma_sq.unwrap_or(priors.sigsq_hat) };
        let latent_z = classification.then(|| {
            let mut z = vec![0.0; n];
            draw_latent_z(&frame.y, &vec![0.0; n], &mut z, &mut rng);
            z
        });
        let residuals = latent_z.clone().unwrap_or_else(|| frame.y.clone());
        Ok(ChainState {
            frame,
            index,
            hyper,
            priors,
            options,
            trees: (0..hyper.num_trees).map(|_| Tree::new(n)).collect(),
            sigma_sq,
            residuals,
            latent_z,
            rng,
            iteration: 0,
            proposal_log: Vec::new(),
        })
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn latent_z(&self) -> Option<&[f64]> {
        self.latent_z.as_deref()
    }

    pub fn index(&self) -> &SplitIndex<'a> {
        &self.index
    }

    /// Logged proposals as `(iteration, tree, evaluation)`.
    pub fn take_proposal_log(&mut self) -> Vec<(usize, usize, ProposalEvaluation)> {
        std::mem::take(&mut self.proposal_log)
    }

    /// One full Gibbs sweep: every tree, then σ² or the latent variables.
    pub fn iterate(&mut self) -> Result<IterationDiagnostics> {
        let m = self.trees.len();
        let mut accepted = 0usize;
        for t in 0..m {
            self.trees[t].add_fit_and_refresh(&mut self.residuals);
            if let Some(ev) = self.metropolis_step(t) {
                accepted += usize::from(ev.accepted);
                if self.options.record_proposals {
                    self.proposal_log.push((self.iteration, t, ev));
                }
            }
            self.draw_leaves(t);
            self.trees[t].add_fit(&mut self.residuals, -1.0);
        }
        if let Some(z) = self.latent_z.as_mut() {
            let g: Vec<f64> = z.iter().zip(&self.residuals).map(|(z, r)| z - r).collect();
            draw_latent_z(&self.frame.y, &g, z, &mut self.rng);
            for ((r, z), g) in self.residuals.iter_mut().zip(z.iter()).zip(&g) {
                *r = z - g;
            }
        } else if self.options.fixed_sigma_sq.is_none() {
            let sse: f64 = self.residuals.iter().map(|r| r * r).sum();
            self.sigma_sq = draw_sigma_sq(self.residuals.len(), sse, self.hyper.nu, self.priors.lambda, &mut self.rng);
        }
        if self.options.check_residuals {
            self.verify_residuals()?;
        }
        self.iteration += 1;
        let (mut leaves, mut depth) = (0usize, 0usize);
        for tree in &self.trees {
            let s = tree.stats();
            leaves += s.b;
            depth += s.max_depth;
        }
        Ok(IterationDiagnostics {
            sigma_sq: self.sigma_sq,
            acceptance: accepted as f64 / m as f64,
            mean_leaves: leaves as f64 / m as f64,
            mean_depth: depth as f64 / m as f64,
        })
    }

    fn context(&self) -> MoveContext<'a> {
        MoveContext {
            hyper: self.hyper,
            sigma_sq: self.sigma_sq,
            sigma_mu_sq: self.priors.sigma_mu_sq(),
            prior_mean: self.priors.leaf_prior_mean(self.hyper.num_trees),
            ignore_likelihood: self.options.ignore_likelihood,
        }
    }

    /// Proposes one move for tree `t`; `None` when the drawn move is
    /// infeasible (an automatic rejection).
    fn metropolis_step(&mut self, t: usize) -> Option<ProposalEvaluation> {
        let (pg, pp, _) = self.hyper.proposal_probs;
        let u: f64 = self.rng.random();
        let kind = if u < pg {
            ProposalKind::Grow
        } else if u < pg + pp {
            ProposalKind::Prune
        } else {
            ProposalKind::Change
        };
        let ctx = self.context();
        let tree = &mut self.trees[t];
        let index = &self.index;
        let rng = &mut self.rng;
        match kind {
            ProposalKind::Grow => {
                let leaves = tree.leaves();
                let id = leaves[rng.random_range(0..leaves.len())];
                let (j, _) = tree.pick_feature(id, index, rng.random())?;
                let n_adj = tree.n_adj(id, j, index) as usize;
                let rule = index.candidate_at(&tree.node(id).rows, j, rng.random_range(0..n_adj))?;
                let (mut ev, part) = evaluate_grow(tree, index, id, rule, &self.residuals, &ctx).ok()?;
                if ev.decide(rng.random()) {
                    tree.apply_grow(id, rule, part).ok()?;
                }
                Some(ev)
            }
            ProposalKind::Prune => {
                let cands = tree.singly_internal();
                if cands.is_empty() {
                    return None;
                }
                let id = cands[rng.random_range(0..cands.len())];
                let mut ev = evaluate_prune(tree, index, id, &ctx).ok()?;
                if ev.decide(rng.random()) {
                    tree.prune_at(id).ok()?;
                }
                Some(ev)
            }
            ProposalKind::Change => {
                let cands = tree.singly_internal();
                if cands.is_empty() {
                    return None;
                }
                let id = cands[rng.random_range(0..cands.len())];
                let (j, _) = tree.pick_feature(id, index, rng.random())?;
                let n_adj = tree.n_adj(id, j, index) as usize;
                let rule = index.candidate_at(&tree.node(id).rows, j, rng.random_range(0..n_adj))?;
                let (mut ev, part) = evaluate_change(tree, index, id, rule, &self.residuals, &ctx).ok()?;
                if ev.decide(rng.random()) {
                    tree.apply_change(id, rule, part).ok()?;
                }
                Some(ev)
            }
        }
    }

    fn draw_leaves(&mut self, t: usize) {
        let sigma_mu_sq = self.priors.sigma_mu_sq();
        let prior_mean = self.priors.leaf_prior_mean(self.hyper.num_trees);
        let tree = &mut self.trees[t];
        for id in tree.leaves() {
            let stats = tree.node(id).stats;
            let mu = draw_leaf(&stats, self.sigma_sq, sigma_mu_sq, prior_mean, &mut self.rng);
            tree.set_leaf_value(id, mu);
        }
    }

    /// Recomputes the residuals from scratch and compares.
    pub fn verify_residuals(&self) -> Result<()> {
        let mut fresh = self.latent_z.clone().unwrap_or_else(|| self.frame.y.clone());
        for tree in &self.trees {
            tree.add_fit(&mut fresh, -1.0);
        }
        for (i, (a, b)) in fresh.iter().zip(&self.residuals).enumerate() {
            if (a - b).abs() > 1e-10 * (1.0 + a.abs()) {
                return Err(BartError::Invariant(format!(
                    "running residual {i} drifted: stored {b}, recomputed {a}"
                )));
            }
        }
        Ok(())
    }

    /// Current sum-of-trees value at every training row.
    pub fn sum_of_trees(&self) -> Vec<f64> {
        let target = self.latent_z.as_deref().unwrap_or(&self.frame.y);
        target.iter().zip(&self.residuals).map(|(t, r)| t - r).collect()
    }

    pub fn snapshot(&self) -> PosteriorSample {
        PosteriorSample::from_trees(&self.trees, self.sigma_sq)
    }
}
