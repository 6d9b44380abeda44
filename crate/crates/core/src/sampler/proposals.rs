//! Metropolis-Hastings ratios for the GROW, PRUNE and CHANGE tree moves.
//!
//! Every ratio is the product of a transition ratio, a likelihood ratio and
//! a tree-structure ratio, all kept in log space. The count-level functions
//! (`grow_ratios` and friends) are pure; the `evaluate_*` functions read the
//! counts off a live tree.

use serde::{Deserialize, Serialize};

use super::likelihood::{log_lik_core, log_lik_quad};
use crate::error::{BartError, Result};
use crate::priors::Hyperparameters;
use crate::tree::{NodeId, NodeSufficientStats, Partition, SplitIndex, SplitRule, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ProposalKind {
    Grow,
    Prune,
    Change,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalEvaluation {
    pub kind: ProposalKind,
    pub log_transition_ratio: f64,
    pub log_likelihood_ratio: f64,
    pub log_tree_structure_ratio: f64,
    pub log_r: f64,
    pub accepted: bool,
}

impl ProposalEvaluation {
    fn new(kind: ProposalKind, trans: f64, lik: f64, structure: f64) -> Self {
        ProposalEvaluation {
            kind,
            log_transition_ratio: trans,
            log_likelihood_ratio: lik,
            log_tree_structure_ratio: structure,
            log_r: (trans + structure) + lik,
            accepted: false,
        }
    }

    /// Accept iff `ln u < log_r`.
    pub fn decide(&mut self, u: f64) -> bool {
        self.accepted = u.ln() < self.log_r;
        self.accepted
    }
}

/// Conditional leaf model used by the likelihood ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveContext<'a> {
    pub hyper: &'a Hyperparameters,
    pub sigma_sq: f64,
    pub sigma_mu_sq: f64,
    /// Prior mean of a single leaf value.
    pub prior_mean: f64,
    /// Debug switch: drop the likelihood ratio so the chain targets the prior.
    pub ignore_likelihood: bool,
}

impl MoveContext<'_> {
    fn core(&self, s: &NodeSufficientStats) -> f64 {
        let s = self.centered(s);
        log_lik_core(s.n, s.sum, self.sigma_sq, self.sigma_mu_sq)
    }

    fn quad(&self, s: &NodeSufficientStats) -> f64 {
        let s = self.centered(s);
        log_lik_quad(s.n, s.sum, self.sigma_sq, self.sigma_mu_sq)
    }

    fn centered(&self, s: &NodeSufficientStats) -> NodeSufficientStats {
        if self.prior_mean == 0.0 {
            *s
        } else {
            s.shifted(self.prior_mean)
        }
    }
}

/// Counts entering the GROW ratios for leaf η and a rule on feature j.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowCounts {
    /// Terminal nodes before the move.
    pub b: usize,
    /// Singly-internal nodes after the move.
    pub w2_after: usize,
    /// Normalized selection weight of j at η (1/p_adj under a uniform prior).
    pub weight: f64,
    /// Split candidates of j at η.
    pub n_adj: u32,
    pub depth: usize,
}

/// Counts entering the PRUNE ratios for singly-internal η.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneCounts {
    /// Terminal nodes before the move.
    pub b: usize,
    /// Singly-internal nodes before the move.
    pub w2: usize,
    pub weight: f64,
    pub n_adj: u32,
    pub depth: usize,
}

fn grow_structure(hyper: &Hyperparameters, depth: usize, weight: f64, n_adj: u32) -> f64 {
    let ps = hyper.prob_split(depth);
    let ps_child = hyper.prob_split(depth + 1);
    ps.ln() + 2.0 * (1.0 - ps_child).ln() - (1.0 - ps).ln() + weight.ln() - (n_adj as f64).ln()
}

pub fn grow_ratios(
    c: &GrowCounts,
    parent: &NodeSufficientStats,
    left: &NodeSufficientStats,
    right: &NodeSufficientStats,
    ctx: &MoveContext,
) -> ProposalEvaluation {
    let (pg, pp, _) = ctx.hyper.proposal_probs;
    let trans = (pp / pg).ln() + (c.b as f64).ln() + (c.n_adj as f64).ln() - c.weight.ln() - (c.w2_after as f64).ln();
    let lik = if ctx.ignore_likelihood { 0.0 } else { ctx.core(left) + ctx.core(right) - ctx.core(parent) };
    let structure = grow_structure(ctx.hyper, c.depth, c.weight, c.n_adj);
    ProposalEvaluation::new(ProposalKind::Grow, trans, lik, structure)
}

pub fn prune_ratios(
    c: &PruneCounts,
    parent: &NodeSufficientStats,
    left: &NodeSufficientStats,
    right: &NodeSufficientStats,
    ctx: &MoveContext,
) -> ProposalEvaluation {
    let (pg, pp, _) = ctx.hyper.proposal_probs;
    let trans =
        (pg / pp).ln() + (c.w2 as f64).ln() + c.weight.ln() - ((c.b - 1) as f64).ln() - (c.n_adj as f64).ln();
    let lik = if ctx.ignore_likelihood { 0.0 } else { ctx.core(parent) - ctx.core(left) - ctx.core(right) };
    let structure = -grow_structure(ctx.hyper, c.depth, c.weight, c.n_adj);
    ProposalEvaluation::new(ProposalKind::Prune, trans, lik, structure)
}

/// Rule selection probability pieces and child statistics for one side of a
/// CHANGE move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeSide {
    pub weight: f64,
    pub n_adj: u32,
    pub left: NodeSufficientStats,
    pub right: NodeSufficientStats,
}

pub fn change_ratios(old: &ChangeSide, new: &ChangeSide, ctx: &MoveContext) -> ProposalEvaluation {
    let trans = (old.weight.ln() + (new.n_adj as f64).ln()) - (new.weight.ln() + (old.n_adj as f64).ln());
    let structure = -trans;
    let lik = if ctx.ignore_likelihood {
        0.0
    } else if old.left.n == new.left.n && old.right.n == new.right.n {
        (ctx.quad(&new.left) - ctx.quad(&old.left)) + (ctx.quad(&new.right) - ctx.quad(&old.right))
    } else {
        (ctx.core(&new.left) - ctx.core(&old.left)) + (ctx.core(&new.right) - ctx.core(&old.right))
    };
    ProposalEvaluation::new(ProposalKind::Change, trans, lik, structure)
}

/// Normalized weight and candidate count of `feature` at node `id`.
fn rule_probability_parts(tree: &mut Tree, id: NodeId, feature: usize, index: &SplitIndex) -> Result<(f64, u32)> {
    let total = tree.available_weight(id, index);
    let n_adj = tree.n_adj(id, feature, index);
    if n_adj == 0 || total <= 0.0 {
        return Err(BartError::Infeasible("feature is not splittable at this node"));
    }
    Ok((index.weights()[feature] / total, n_adj))
}

/// GROW ratios for splitting leaf `id` by `rule`, against residuals `r`.
/// Node statistics of the tree must be current with respect to `r`.
pub fn evaluate_grow(
    tree: &mut Tree,
    index: &SplitIndex,
    id: NodeId,
    rule: SplitRule,
    r: &[f64],
    ctx: &MoveContext,
) -> Result<(ProposalEvaluation, Partition)> {
    if !tree.node(id).is_leaf() {
        return Err(BartError::Infeasible("grow target is not a leaf"));
    }
    let (weight, n_adj) = rule_probability_parts(tree, id, rule.feature, index)?;
    let part = Partition::compute(index, &tree.node(id).rows, &rule, r);
    if !part.is_proper() {
        return Err(BartError::Infeasible("split leaves a child empty"));
    }
    let stats = tree.stats();
    let parent_loses = tree.node(id).parent.is_some_and(|p| tree.is_singly_internal(p));
    let counts = GrowCounts {
        b: stats.b,
        w2_after: stats.w2 + 1 - usize::from(parent_loses),
        weight,
        n_adj,
        depth: tree.node(id).depth,
    };
    let parent = tree.node(id).stats;
    Ok((grow_ratios(&counts, &parent, &part.left, &part.right, ctx), part))
}

/// PRUNE ratios for collapsing singly-internal node `id`.
pub fn evaluate_prune(tree: &mut Tree, index: &SplitIndex, id: NodeId, ctx: &MoveContext) -> Result<ProposalEvaluation> {
    if !tree.is_singly_internal(id) {
        return Err(BartError::Infeasible("prune target is not singly internal"));
    }
    let rule = tree.node(id).rule.unwrap();
    let (weight, n_adj) = rule_probability_parts(tree, id, rule.feature, index)?;
    let stats = tree.stats();
    let (l, rr) = tree.node(id).children.unwrap();
    let counts = PruneCounts { b: stats.b, w2: stats.w2, weight, n_adj, depth: tree.node(id).depth };
    let (ls, rs) = (tree.node(l).stats, tree.node(rr).stats);
    let parent = ls.combine(&rs);
    Ok(prune_ratios(&counts, &parent, &ls, &rs, ctx))
}

/// CHANGE ratios for replacing the rule of singly-internal node `id`.
pub fn evaluate_change(
    tree: &mut Tree,
    index: &SplitIndex,
    id: NodeId,
    rule: SplitRule,
    r: &[f64],
    ctx: &MoveContext,
) -> Result<(ProposalEvaluation, Partition)> {
    if !tree.is_singly_internal(id) {
        return Err(BartError::Infeasible("change target is not singly internal"));
    }
    let old_rule = tree.node(id).rule.unwrap();
    let (w_old, n_old) = rule_probability_parts(tree, id, old_rule.feature, index)?;
    let (w_new, n_new) = rule_probability_parts(tree, id, rule.feature, index)?;
    let part = Partition::compute(index, &tree.node(id).rows, &rule, r);
    if !part.is_proper() {
        return Err(BartError::Infeasible("split leaves a child empty"));
    }
    let (l, rr) = tree.node(id).children.unwrap();
    let old = ChangeSide { weight: w_old, n_adj: n_old, left: tree.node(l).stats, right: tree.node(rr).stats };
    let new = ChangeSide { weight: w_new, n_adj: n_new, left: part.left, right: part.right };
    Ok((change_ratios(&old, &new, ctx), part))
}
