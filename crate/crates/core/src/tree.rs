//! Binary regression trees with missing-aware split rules.
//!
//! A [`Tree`] lives inside one MCMC chain and keeps, for every node, the
//! training rows that reach it plus their residual sufficient statistics.
//! When memcache is on, each node also caches its split-candidate counts
//! (`n_adj` per predictor); otherwise they are recomputed on demand.
//! Kept posterior samples are stored as [`FrozenTree`]s, which only carry
//! what prediction needs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::ModelFrame;
use crate::error::{BartError, Result};

pub type NodeId = usize;

/// Where a split sends missing values.
///
/// `Type1`: missing left, present `x <= c` left.
/// `Type2`: missing right, present `x <= c` left.
/// `Type3`: missing left, every present value right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MiaType {
    Type1,
    Type2,
    Type3,
}

impl MiaType {
    pub fn code(self) -> u8 {
        match self {
            MiaType::Type1 => 1,
            MiaType::Type2 => 2,
            MiaType::Type3 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(MiaType::Type1),
            2 => Some(MiaType::Type2),
            3 => Some(MiaType::Type3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub feature: usize,
    /// Split point; `None` for a missingness-only (type 3) rule.
    pub value: Option<f64>,
    pub mia: MiaType,
}

impl SplitRule {
    pub fn new(feature: usize, value: f64) -> Self {
        SplitRule { feature, value: Some(value), mia: MiaType::Type1 }
    }

    #[inline]
    pub fn goes_left(&self, x: f64) -> bool {
        if x.is_nan() {
            return !matches!(self.mia, MiaType::Type2);
        }
        match (self.mia, self.value) {
            (MiaType::Type3, _) => false,
            (_, Some(c)) => x <= c,
            (_, None) => false,
        }
    }
}

/// Row count, residual sum and residual sum of squares of a node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeSufficientStats {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl NodeSufficientStats {
    pub fn from_rows(rows: &[u32], r: &[f64]) -> Self {
        let mut s = NodeSufficientStats { n: rows.len(), ..Default::default() };
        for &i in rows {
            let v = r[i as usize];
            s.sum += v;
            s.sum_sq += v * v;
        }
        s
    }

    pub fn combine(&self, other: &Self) -> Self {
        NodeSufficientStats { n: self.n + other.n, sum: self.sum + other.sum, sum_sq: self.sum_sq + other.sum_sq }
    }

    /// Statistics of `r - offset` for the same rows.
    pub fn shifted(&self, offset: f64) -> Self {
        let n = self.n as f64;
        NodeSufficientStats {
            n: self.n,
            sum: self.sum - n * offset,
            sum_sq: self.sum_sq - 2.0 * offset * self.sum + n * offset * offset,
        }
    }
}

/// Per-predictor split-candidate counts at one node (0 = structural zero).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCache {
    pub counts: Vec<u32>,
    pub p_adj: usize,
    pub weight_total: f64,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub parent: Option<NodeId>,
    pub children: Option<(NodeId, NodeId)>,
    pub depth: usize,
    pub rule: Option<SplitRule>,
    pub leaf_value: f64,
    pub rows: Vec<u32>,
    pub stats: NodeSufficientStats,
    cache: Option<NodeCache>,
}

impl Node {
    fn leaf(parent: Option<NodeId>, depth: usize, rows: Vec<u32>, stats: NodeSufficientStats) -> Self {
        Node { parent, children: None, depth, rule: None, leaf_value: 0.0, rows, stats, cache: None }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn cache(&self) -> Option<&NodeCache> {
        self.cache.as_ref()
    }
}

/// Read-only view of the training predictors used for split enumeration.
#[derive(Debug, Clone)]
pub struct SplitIndex<'a> {
    columns: &'a [Vec<f64>],
    /// Rank of each present cell among the sorted unique values of its column.
    ranks: Vec<Vec<u32>>,
    uniques: Vec<Vec<f64>>,
    weights: Vec<f64>,
    mia: bool,
    memcache: bool,
}

const MISSING_RANK: u32 = u32::MAX;

impl<'a> SplitIndex<'a> {
    pub fn new(frame: &'a ModelFrame, weights: &[f64], memcache: bool) -> Result<Self> {
        if weights.len() != frame.p() {
            return Err(BartError::arg(format!(
                "covariate weight vector has length {}, frame has {} columns",
                weights.len(),
                frame.p()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(BartError::arg("covariate weights must be positive and finite"));
        }
        let mut ranks = Vec::with_capacity(frame.p());
        let mut uniques = Vec::with_capacity(frame.p());
        for col in &frame.columns {
            let mut u: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
            u.sort_by(f64::total_cmp);
            u.dedup();
            ranks.push(
                col.iter()
                    .map(|v| if v.is_nan() { MISSING_RANK } else { u.partition_point(|x| x < v) as u32 })
                    .collect(),
            );
            uniques.push(u);
        }
        Ok(SplitIndex {
            columns: &frame.columns,
            ranks,
            uniques,
            weights: weights.to_vec(),
            mia: frame.use_missing_data,
            memcache,
        })
    }

    pub fn n(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mia(&self) -> bool {
        self.mia
    }

    pub fn memcache(&self) -> bool {
        self.memcache
    }

    #[inline]
    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature][row]
    }

    fn candidate_count(&self, distinct: usize, has_missing: bool) -> u32 {
        let below_max = distinct.saturating_sub(1) as u32;
        if self.mia {
            2 * below_max + u32::from(has_missing && distinct >= 1)
        } else {
            below_max
        }
    }

    /// Sorted distinct present ranks of `feature` among `rows`, and whether
    /// any row is missing it.
    fn distinct_ranks(&self, rows: &[u32], feature: usize, buf: &mut Vec<u32>) -> bool {
        buf.clear();
        let u = self.uniques[feature].len();
        let ranks = &self.ranks[feature];
        let mut has_missing = false;
        if u <= 256 * rows.len() {
            let mut bits = vec![0u64; u.div_ceil(64)];
            for &i in rows {
                let r = ranks[i as usize];
                if r == MISSING_RANK {
                    has_missing = true;
                } else {
                    bits[(r >> 6) as usize] |= 1u64 << (r & 63);
                }
            }
            for (w, &word) in bits.iter().enumerate() {
                let mut word = word;
                while word != 0 {
                    buf.push((w as u32) << 6 | word.trailing_zeros());
                    word &= word - 1;
                }
            }
            return has_missing;
        }
        for &i in rows {
            let r = ranks[i as usize];
            if r == MISSING_RANK {
                has_missing = true;
            } else {
                buf.push(r);
            }
        }
        buf.sort_unstable();
        buf.dedup();
        has_missing
    }

    /// Distinct present values of `feature` among `rows`, and whether any
    /// row is missing it.
    fn distinct_count(&self, rows: &[u32], feature: usize, bits: &mut Vec<u64>, buf: &mut Vec<u32>) -> (usize, bool) {
        let u = self.uniques[feature].len();
        if u > 256 * rows.len() {
            let m = self.distinct_ranks(rows, feature, buf);
            return (buf.len(), m);
        }
        let ranks = &self.ranks[feature];
        bits.clear();
        bits.resize(u.div_ceil(64), 0);
        let mut has_missing = false;
        for &i in rows {
            let r = ranks[i as usize];
            if r == MISSING_RANK {
                has_missing = true;
            } else {
                bits[(r >> 6) as usize] |= 1u64 << (r & 63);
            }
        }
        (bits.iter().map(|w| w.count_ones() as usize).sum(), has_missing)
    }

    /// Number of distinct split rules for `feature` among `rows`.
    pub fn count_candidates(&self, rows: &[u32], feature: usize) -> u32 {
        let (distinct, has_missing) = self.distinct_count(rows, feature, &mut Vec::new(), &mut Vec::new());
        self.candidate_count(distinct, has_missing)
    }

    /// True iff `feature` has at least one valid split among `rows`.
    /// Stops scanning as soon as the answer is known.
    pub fn is_available(&self, rows: &[u32], feature: usize) -> bool {
        let ranks = &self.ranks[feature];
        let mut first = None;
        let mut has_missing = false;
        for &i in rows {
            let r = ranks[i as usize];
            if r == MISSING_RANK {
                has_missing = true;
                if self.mia && first.is_some() {
                    return true;
                }
            } else {
                match first {
                    None => {
                        if self.mia && has_missing {
                            return true;
                        }
                        first = Some(r);
                    }
                    Some(f) if f != r => return true,
                    _ => {}
                }
            }
        }
        false
    }

    pub fn compute_cache(&self, rows: &[u32]) -> NodeCache {
        let (mut bits, mut buf) = (Vec::new(), Vec::new());
        let mut counts = Vec::with_capacity(self.p());
        let mut p_adj = 0;
        let mut weight_total = 0.0;
        for j in 0..self.p() {
            let (distinct, has_missing) = self.distinct_count(rows, j, &mut bits, &mut buf);
            let c = self.candidate_count(distinct, has_missing);
            if c > 0 {
                p_adj += 1;
                weight_total += self.weights[j];
            }
            counts.push(c);
        }
        NodeCache { counts, p_adj, weight_total }
    }

    /// All split rules for `feature` among `rows`, in canonical order:
    /// for each unique value below the node maximum, type 1 then type 2
    /// (type 1 only without missing-data support), then the type 3 rule.
    pub fn candidates(&self, rows: &[u32], feature: usize) -> Vec<SplitRule> {
        let mut buf = Vec::with_capacity(rows.len());
        let has_missing = self.distinct_ranks(rows, feature, &mut buf);
        let mut out = Vec::new();
        let below = buf.len().saturating_sub(1);
        for &r in &buf[..below] {
            let c = self.uniques[feature][r as usize];
            out.push(SplitRule { feature, value: Some(c), mia: MiaType::Type1 });
            if self.mia {
                out.push(SplitRule { feature, value: Some(c), mia: MiaType::Type2 });
            }
        }
        if self.mia && has_missing && !buf.is_empty() {
            out.push(SplitRule { feature, value: None, mia: MiaType::Type3 });
        }
        out
    }

    /// The `k`-th rule of [`SplitIndex::candidates`] without building the list.
    pub fn candidate_at(&self, rows: &[u32], feature: usize, k: usize) -> Option<SplitRule> {
        let mut buf = Vec::with_capacity(rows.len());
        let has_missing = self.distinct_ranks(rows, feature, &mut buf);
        let below = buf.len().saturating_sub(1);
        let per_value = if self.mia { 2 } else { 1 };
        if k < below * per_value {
            let c = self.uniques[feature][buf[k / per_value] as usize];
            let mia = if k % per_value == 0 { MiaType::Type1 } else { MiaType::Type2 };
            return Some(SplitRule { feature, value: Some(c), mia });
        }
        (self.mia && has_missing && !buf.is_empty() && k == below * per_value)
            .then_some(SplitRule { feature, value: None, mia: MiaType::Type3 })
    }

    /// Splits `rows` by `rule`, preserving order.
    pub fn partition(&self, rows: &[u32], rule: &SplitRule) -> (Vec<u32>, Vec<u32>) {
        let col = &self.columns[rule.feature];
        let mut left = Vec::with_capacity(rows.len());
        let mut right = Vec::with_capacity(rows.len());
        for &i in rows {
            if rule.goes_left(col[i as usize]) {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        (left, right)
    }
}

/// Structure counts of a tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeStats {
    /// Terminal nodes.
    pub b: usize,
    /// Internal nodes whose children are both terminal.
    pub w2: usize,
    pub n_nodes: usize,
    pub max_depth: usize,
}

/// Rows and statistics of a proposed split, computed before committing it.
#[derive(Debug, Clone)]
pub struct Partition {
    pub left_rows: Vec<u32>,
    pub right_rows: Vec<u32>,
    pub left: NodeSufficientStats,
    pub right: NodeSufficientStats,
}

impl Partition {
    pub fn compute(index: &SplitIndex, rows: &[u32], rule: &SplitRule, r: &[f64]) -> Self {
        let (left_rows, right_rows) = index.partition(rows, rule);
        let left = NodeSufficientStats::from_rows(&left_rows, r);
        let right = NodeSufficientStats::from_rows(&right_rows, r);
        Partition { left_rows, right_rows, left, right }
    }

    pub fn is_proper(&self) -> bool {
        !self.left_rows.is_empty() && !self.right_rows.is_empty()
    }
}

/// Arena-backed binary tree; node 0 is the root.
#[derive(Debug, Clone)]
pub struct Tree {
    slots: Vec<Option<Node>>,
    free: Vec<NodeId>,
}

impl Tree {
    /// Single root node holding rows `0..n`.
    pub fn new(n: usize) -> Self {
        let rows: Vec<u32> = (0..n as u32).collect();
        let stats = NodeSufficientStats { n, ..Default::default() };
        Tree { slots: vec![Some(Node::leaf(None, 0, rows, stats))], free: Vec::new() }
    }

    pub const ROOT: NodeId = 0;

    pub fn node(&self, id: NodeId) -> &Node {
        self.slots[id].as_ref().expect("dangling node id")
    }

    fn node_mut(&mut self, id: NodeId) -> &mut Node {
        self.slots[id].as_mut().expect("dangling node id")
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.slots.get(id).is_some_and(Option::is_some)
    }

    fn alloc(&mut self, node: Node) -> NodeId {
        match self.free.pop() {
            Some(id) => {
                self.slots[id] = Some(node);
                id
            }
            None => {
                self.slots.push(Some(node));
                self.slots.len() - 1
            }
        }
    }

    /// Node ids in preorder (left subtree before right).
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![Self::ROOT];
        while let Some(id) = stack.pop() {
            out.push(id);
            if let Some((l, r)) = self.node(id).children {
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        self.preorder().into_iter().filter(|&id| self.node(id).is_leaf()).collect()
    }

    pub fn internals(&self) -> Vec<NodeId> {
        self.preorder().into_iter().filter(|&id| !self.node(id).is_leaf()).collect()
    }

    pub fn is_singly_internal(&self, id: NodeId) -> bool {
        match self.node(id).children {
            Some((l, r)) => self.node(l).is_leaf() && self.node(r).is_leaf(),
            None => false,
        }
    }

    pub fn singly_internal(&self) -> Vec<NodeId> {
        self.preorder().into_iter().filter(|&id| self.is_singly_internal(id)).collect()
    }

    pub fn stats(&self) -> TreeStats {
        let mut s = TreeStats { b: 0, w2: 0, n_nodes: 0, max_depth: 0 };
        for id in self.preorder() {
            let node = self.node(id);
            s.n_nodes += 1;
            s.max_depth = s.max_depth.max(node.depth);
            if node.is_leaf() {
                s.b += 1;
            } else if self.is_singly_internal(id) {
                s.w2 += 1;
            }
        }
        s
    }

    /// Leaf reached by a row of predictor values (`NaN` = missing).
    pub fn route(&self, x: &[f64]) -> NodeId {
        let mut id = Self::ROOT;
        loop {
            let node = self.node(id);
            match (node.children, node.rule) {
                (Some((l, r)), Some(rule)) => id = if rule.goes_left(x[rule.feature]) { l } else { r },
                _ => return id,
            }
        }
    }

    /// Adds each leaf's value back into `r` and recomputes all node
    /// statistics against the result, in one pass over the rows.
    pub fn add_fit_and_refresh(&mut self, r: &mut [f64]) {
        for id in self.preorder().into_iter().rev() {
            let stats = match self.node(id).children {
                None => {
                    let node = self.node(id);
                    let mu = node.leaf_value;
                    let mut s = NodeSufficientStats { n: node.rows.len(), ..Default::default() };
                    for &i in &node.rows {
                        let v = r[i as usize] + mu;
                        r[i as usize] = v;
                        s.sum += v;
                        s.sum_sq += v * v;
                    }
                    s
                }
                Some((l, rr)) => self.node(l).stats.combine(&self.node(rr).stats),
            };
            self.node_mut(id).stats = stats;
        }
    }

    /// Recomputes every node's sufficient statistics against residuals `r`.
    pub fn refresh_stats(&mut self, r: &[f64]) {
        for id in self.preorder().into_iter().rev() {
            let stats = match self.node(id).children {
                None => NodeSufficientStats::from_rows(&self.node(id).rows, r),
                Some((l, rr)) => self.node(l).stats.combine(&self.node(rr).stats),
            };
            self.node_mut(id).stats = stats;
        }
    }

    /// Candidate counts at `id`: cached when memcache is on, otherwise
    /// computed fresh.
    pub fn node_cache(&mut self, id: NodeId, index: &SplitIndex) -> NodeCache {
        if index.memcache() {
            self.ensure_cache(id, index).clone()
        } else {
            index.compute_cache(&self.node(id).rows)
        }
    }

    fn ensure_cache(&mut self, id: NodeId, index: &SplitIndex) -> &NodeCache {
        if self.node(id).cache.is_none() {
            let c = index.compute_cache(&self.node(id).rows);
            self.node_mut(id).cache = Some(c);
        }
        self.node(id).cache.as_ref().unwrap()
    }

    /// Sum of covariate weights over the predictors available at `id`.
    pub fn available_weight(&mut self, id: NodeId, index: &SplitIndex) -> f64 {
        if index.memcache() {
            self.ensure_cache(id, index).weight_total
        } else {
            let rows = &self.node(id).rows;
            (0..index.p()).filter(|&j| index.is_available(rows, j)).map(|j| index.weights()[j]).sum()
        }
    }

    /// Split-candidate count `n_adj` of `feature` at `id`.
    pub fn n_adj(&mut self, id: NodeId, feature: usize, index: &SplitIndex) -> u32 {
        if index.memcache() {
            self.ensure_cache(id, index).counts[feature]
        } else {
            index.count_candidates(&self.node(id).rows, feature)
        }
    }

    /// Available predictors at `id` with their normalized selection weights.
    pub fn available_predictors(&mut self, id: NodeId, index: &SplitIndex) -> Vec<(usize, f64)> {
        let rows_avail: Vec<usize> = if index.memcache() {
            let c = self.ensure_cache(id, index);
            (0..c.counts.len()).filter(|&j| c.counts[j] > 0).collect()
        } else {
            let rows = &self.node(id).rows;
            (0..index.p()).filter(|&j| index.is_available(rows, j)).collect()
        };
        let total: f64 = rows_avail.iter().map(|&j| index.weights()[j]).sum();
        rows_avail.into_iter().map(|j| (j, index.weights()[j] / total)).collect()
    }

    /// Picks an available predictor with probability proportional to its
    /// weight given `u ~ Uniform(0,1)`. Returns `None` when nothing is
    /// splittable.
    pub fn pick_feature(&mut self, id: NodeId, index: &SplitIndex, u: f64) -> Option<(usize, f64)> {
        let total = self.available_weight(id, index);
        if total <= 0.0 {
            return None;
        }
        let target = u * total;
        let mut acc = 0.0;
        let mut last = None;
        for j in 0..index.p() {
            let avail = if index.memcache() {
                self.ensure_cache(id, index).counts[j] > 0
            } else {
                index.is_available(&self.node(id).rows, j)
            };
            if avail {
                acc += index.weights()[j];
                last = Some(j);
                if target < acc {
                    return Some((j, index.weights()[j] / total));
                }
            }
        }
        last.map(|j| (j, index.weights()[j] / total))
    }

    /// Candidate split rules of `feature` at `id`.
    pub fn available_values(&self, id: NodeId, feature: usize, index: &SplitIndex) -> Result<Vec<SplitRule>> {
        let c = index.candidates(&self.node(id).rows, feature);
        if c.is_empty() {
            return Err(BartError::Infeasible("feature has no split candidates at this node"));
        }
        Ok(c)
    }

    /// Turns leaf `id` into an internal node with two children.
    pub fn apply_grow(&mut self, id: NodeId, rule: SplitRule, part: Partition) -> Result<(NodeId, NodeId)> {
        if !self.node(id).is_leaf() {
            return Err(BartError::Infeasible("grow target is not a leaf"));
        }
        if !part.is_proper() {
            return Err(BartError::Infeasible("split leaves a child empty"));
        }
        let depth = self.node(id).depth + 1;
        let l = self.alloc(Node::leaf(Some(id), depth, part.left_rows, part.left));
        let r = self.alloc(Node::leaf(Some(id), depth, part.right_rows, part.right));
        let node = self.node_mut(id);
        node.children = Some((l, r));
        node.rule = Some(rule);
        node.stats = part.left.combine(&part.right);
        Ok((l, r))
    }

    pub fn grow_at(&mut self, id: NodeId, rule: SplitRule, index: &SplitIndex, r: &[f64]) -> Result<(NodeId, NodeId)> {
        if !self.node(id).is_leaf() {
            return Err(BartError::Infeasible("grow target is not a leaf"));
        }
        let part = Partition::compute(index, &self.node(id).rows, &rule, r);
        self.apply_grow(id, rule, part)
    }

    /// Removes the two leaf children of singly-internal node `id`.
    pub fn prune_at(&mut self, id: NodeId) -> Result<()> {
        if !self.is_singly_internal(id) {
            return Err(BartError::Infeasible("prune target is not singly internal"));
        }
        let (l, r) = self.node(id).children.unwrap();
        let stats = self.node(l).stats.combine(&self.node(r).stats);
        self.slots[l] = None;
        self.slots[r] = None;
        self.free.push(r);
        self.free.push(l);
        let node = self.node_mut(id);
        node.children = None;
        node.rule = None;
        node.stats = stats;
        node.leaf_value = 0.0;
        Ok(())
    }

    /// Replaces the rule of singly-internal node `id`, re-routing its rows.
    pub fn apply_change(&mut self, id: NodeId, rule: SplitRule, part: Partition) -> Result<()> {
        if !self.is_singly_internal(id) {
            return Err(BartError::Infeasible("change target is not singly internal"));
        }
        if !part.is_proper() {
            return Err(BartError::Infeasible("split leaves a child empty"));
        }
        let (l, r) = self.node(id).children.unwrap();
        self.node_mut(id).rule = Some(rule);
        for (child, rows, stats) in [(l, part.left_rows, part.left), (r, part.right_rows, part.right)] {
            let c = self.node_mut(child);
            c.rows = rows;
            c.stats = stats;
            c.cache = None;
        }
        Ok(())
    }

    pub fn change_at(&mut self, id: NodeId, rule: SplitRule, index: &SplitIndex, r: &[f64]) -> Result<()> {
        if !self.is_singly_internal(id) {
            return Err(BartError::Infeasible("change target is not singly internal"));
        }
        let part = Partition::compute(index, &self.node(id).rows, &rule, r);
        self.apply_change(id, rule, part)
    }

    pub fn set_leaf_value(&mut self, id: NodeId, value: f64) {
        self.node_mut(id).leaf_value = value;
    }

    /// Adds each leaf's value into `out` for the rows it holds.
    pub fn add_fit(&self, out: &mut [f64], sign: f64) {
        for id in self.leaves() {
            let node = self.node(id);
            let mu = sign * node.leaf_value;
            for &i in &node.rows {
                out[i as usize] += mu;
            }
        }
    }

    pub fn freeze(&self) -> FrozenTree {
        let order = self.preorder();
        let mut pos = vec![0u32; self.slots.len()];
        for (k, &id) in order.iter().enumerate() {
            pos[id] = k as u32;
        }
        let nodes = order
            .iter()
            .map(|&id| {
                let node = self.node(id);
                match (node.children, node.rule) {
                    (Some((_, r)), Some(rule)) => FrozenNode::split(rule, pos[r]),
                    _ => FrozenNode::leaf(node.leaf_value),
                }
            })
            .collect();
        FrozenTree { nodes }
    }

    /// Indented text rendering for debugging and golden tests.
    pub fn dump(&self, names: &[String]) -> String {
        let mut out = String::new();
        self.dump_node(Self::ROOT, names, &mut out);
        out
    }

    fn dump_node(&self, id: NodeId, names: &[String], out: &mut String) {
        let node = self.node(id);
        let pad = "  ".repeat(node.depth);
        match (node.children, node.rule) {
            (Some((l, r)), Some(rule)) => {
                let name = names.get(rule.feature).cloned().unwrap_or_else(|| format!("x{}", rule.feature));
                let _ = writeln!(out, "{pad}{} n={}", describe_rule(&rule, &name), node.stats.n);
                self.dump_node(l, names, out);
                self.dump_node(r, names, out);
            }
            _ => {
                let _ = writeln!(out, "{pad}leaf mu={:.6} n={}", node.leaf_value, node.stats.n);
            }
        }
    }
}

fn describe_rule(rule: &SplitRule, name: &str) -> String {
    match (rule.mia, rule.value) {
        (MiaType::Type3, _) => format!("{name} is missing [type 3]"),
        (t, Some(c)) => format!("{name} <= {c} [type {}]", t.code()),
        (t, None) => format!("{name} [type {}]", t.code()),
    }
}

/// Compact immutable node; `right` is the preorder index of the right child
/// (the left child always follows its parent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrozenNode {
    /// 0 for a leaf, otherwise the MIA type code of the split.
    pub kind: u8,
    pub feature: u32,
    pub right: u32,
    /// Split point for internal nodes, leaf value for leaves.
    pub value: f64,
}

impl FrozenNode {
    pub fn leaf(value: f64) -> Self {
        FrozenNode { kind: 0, feature: 0, right: 0, value }
    }

    pub fn split(rule: SplitRule, right: u32) -> Self {
        FrozenNode { kind: rule.mia.code(), feature: rule.feature as u32, right, value: rule.value.unwrap_or(f64::NAN) }
    }

    pub fn is_leaf(&self) -> bool {
        self.kind == 0
    }

    pub fn rule(&self) -> Option<SplitRule> {
        let mia = MiaType::from_code(self.kind)?;
        let value = (mia != MiaType::Type3).then_some(self.value);
        Some(SplitRule { feature: self.feature as usize, value, mia })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenTree {
    pub nodes: Vec<FrozenNode>,
}

impl FrozenTree {
    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        predict_slice(&self.nodes, x)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Checks preorder layout: every internal node's children exist and
    /// every node is reached exactly once.
    pub fn validate(&self, p: usize) -> Result<()> {
        fn walk(nodes: &[FrozenNode], i: usize, p: usize, seen: &mut usize) -> Result<usize> {
            let node = nodes.get(i).ok_or_else(|| BartError::Invariant("tree index out of bounds".into()))?;
            *seen += 1;
            if node.is_leaf() {
                if !node.value.is_finite() {
                    return Err(BartError::Invariant("non-finite leaf value".into()));
                }
                return Ok(i + 1);
            }
            if node.rule().is_none() || node.feature as usize >= p {
                return Err(BartError::Invariant("bad split rule".into()));
            }
            let end_left = walk(nodes, i + 1, p, seen)?;
            if end_left != node.right as usize {
                return Err(BartError::Invariant("right-child index mismatch".into()));
            }
            walk(nodes, node.right as usize, p, seen)
        }
        let mut seen = 0;
        let end = walk(&self.nodes, 0, p, &mut seen)?;
        if end != self.nodes.len() || seen != self.nodes.len() {
            return Err(BartError::Invariant("unreachable nodes in tree".into()));
        }
        Ok(())
    }
}

/// Routes `x` through a preorder node slice and returns the leaf value.
#[inline]
pub fn predict_slice(nodes: &[FrozenNode], x: &[f64]) -> f64 {
    let mut i = 0usize;
    loop {
        let node = &nodes[i];
        if node.kind == 0 {
            return node.value;
        }
        let v = x[node.feature as usize];
        let left = if v.is_nan() {
            node.kind != 2
        } else {
            node.kind != 3 && v <= node.value
        };
        i = if left { i + 1 } else { node.right as usize };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ModelFrame, Task};

    fn frame(cols: Vec<Vec<f64>>) -> ModelFrame {
        let n = cols[0].len();
        let names = (0..cols.len()).map(|j| format!("x{j}")).collect();
        ModelFrame::from_columns(names, cols, vec![0.0; n], Task::Regression).unwrap()
    }

    #[test]
    fn mia_routing_table() {
        let t1 = SplitRule { feature: 0, value: Some(7.0), mia: MiaType::Type1 };
        let t2 = SplitRule { feature: 0, value: Some(7.0), mia: MiaType::Type2 };
        let t3 = SplitRule { feature: 0, value: None, mia: MiaType::Type3 };
        assert!(t1.goes_left(f64::NAN));
        assert!(t1.goes_left(7.0) && !t1.goes_left(7.5));
        assert!(t2.goes_left(5.0) && !t2.goes_left(f64::NAN));
        assert!(!t3.goes_left(5.0) && t3.goes_left(f64::NAN));
    }

    #[test]
    fn candidates_exclude_the_maximum() {
        let f = frame(vec![vec![3.0, 1.0, 2.0, 2.0]]);
        let idx = SplitIndex::new(&f, &[1.0], true).unwrap();
        let rows: Vec<u32> = (0..4).collect();
        let c = idx.candidates(&rows, 0);
        assert_eq!(c.iter().map(|r| r.value.unwrap()).collect::<Vec<_>>(), vec![1.0, 2.0]);
        assert_eq!(idx.count_candidates(&rows, 0), 2);
        let constant = frame(vec![vec![4.0; 3]]);
        let idx = SplitIndex::new(&constant, &[1.0], true).unwrap();
        assert_eq!(idx.count_candidates(&[0, 1, 2], 0), 0);
        assert!(!idx.is_available(&[0, 1, 2], 0));
    }

    #[test]
    fn mia_candidates() {
        let f = frame(vec![vec![1.0, f64::NAN, 2.0, 3.0]]);
        let idx = SplitIndex::new(&f, &[1.0], true).unwrap();
        assert!(idx.mia());
        let rows: Vec<u32> = (0..4).collect();
        let c = idx.candidates(&rows, 0);
        assert_eq!(c.len(), 5);
        assert_eq!(idx.count_candidates(&rows, 0), 5);
        for (k, rule) in c.iter().enumerate() {
            assert_eq!(idx.candidate_at(&rows, 0, k), Some(*rule));
            let (l, r) = idx.partition(&rows, rule);
            assert!(!l.is_empty() && !r.is_empty());
        }
        assert_eq!(c[4].mia, MiaType::Type3);
        // one present value plus missingness: only the type 3 rule
        assert_eq!(idx.count_candidates(&[0, 1], 0), 1);
        assert!(idx.is_available(&[0, 1], 0));
        assert!(!idx.is_available(&[1], 0));
    }

    #[test]
    fn grow_prune_change_counts() {
        let f = frame(vec![vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 1.0, 0.0, 1.0]]);
        let idx = SplitIndex::new(&f, &[1.0, 1.0], true).unwrap();
        let r = vec![1.0, 2.0, 3.0, 4.0];
        let mut t = Tree::new(4);
        t.refresh_stats(&r);
        assert_eq!(t.stats().b, 1);
        assert_eq!(t.stats().w2, 0);
        let (l, rr) = t.grow_at(Tree::ROOT, SplitRule::new(0, 2.0), &idx, &r).unwrap();
        assert_eq!((t.stats().b, t.stats().w2), (2, 1));
        assert_eq!(t.node(l).rows, vec![0, 1]);
        assert_eq!(t.node(rr).stats.sum, 7.0);
        t.change_at(Tree::ROOT, SplitRule::new(1, 0.0), &idx, &r).unwrap();
        assert_eq!((t.stats().b, t.stats().w2), (2, 1));
        assert_eq!(t.node(l).rows, vec![0, 2]);
        t.prune_at(Tree::ROOT).unwrap();
        assert_eq!((t.stats().b, t.stats().w2, t.stats().n_nodes), (1, 0, 1));
        assert_eq!(t.node(Tree::ROOT).stats.sum, 10.0);
        assert!(t.prune_at(Tree::ROOT).is_err());
    }

    #[test]
    fn available_predictor_weights() {
        let f = frame(vec![vec![1.0, 2.0, 3.0], vec![5.0; 3], vec![0.0, 1.0, 1.0]]);
        let idx = SplitIndex::new(&f, &[1.0, 1.0, 1.0], false).unwrap();
        let mut t = Tree::new(3);
        let avail = t.available_predictors(Tree::ROOT, &idx);
        assert_eq!(avail, vec![(0, 0.5), (2, 0.5)]);
        let f = frame(vec![vec![1.0, 2.0], vec![0.0, 1.0]]);
        let idx = SplitIndex::new(&f, &[5.0, 1.0], true).unwrap();
        let mut t = Tree::new(2);
        let avail = t.available_predictors(Tree::ROOT, &idx);
        assert!((avail[0].1 - 5.0 / 6.0).abs() < 1e-15 && (avail[1].1 - 1.0 / 6.0).abs() < 1e-15);
        let g = frame(vec![vec![2.0; 3]]);
        let idx = SplitIndex::new(&g, &[1.0], true).unwrap();
        assert!(Tree::new(3).available_predictors(Tree::ROOT, &idx).is_empty());
    }

    #[test]
    fn frozen_tree_predicts_like_router() {
        let f = frame(vec![vec![1.0, 2.0, 3.0, 4.0, f64::NAN], vec![0.0, 1.0, 0.0, 1.0, 1.0]]);
        let idx = SplitIndex::new(&f, &[1.0, 1.0], true).unwrap();
        let r = vec![0.0; 5];
        let mut t = Tree::new(5);
        let (l, rr) = t.grow_at(Tree::ROOT, SplitRule { feature: 0, value: Some(2.0), mia: MiaType::Type2 }, &idx, &r).unwrap();
        let (a, b) = t.grow_at(rr, SplitRule::new(1, 0.0), &idx, &r).unwrap();
        for (k, id) in [l, a, b].into_iter().enumerate() {
            t.set_leaf_value(id, k as f64 + 1.0);
        }
        let frozen = t.freeze();
        frozen.validate(2).unwrap();
        for i in 0..5 {
            let x = f.row(i);
            assert_eq!(frozen.predict(&x), t.node(t.route(&x)).leaf_value);
            assert!(t.node(t.route(&x)).rows.contains(&(i as u32)));
        }
        let dump = t.dump(&f.column_names);
        assert!(dump.starts_with("x0 <= 2 [type 2] n=5\n  leaf"));
    }
}
