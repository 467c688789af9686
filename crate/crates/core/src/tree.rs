//! Greedy binary trees whose splits are accepted only when the training-loss
//! reduction outweighs the optimism of replacing a leaf by a stump.
//!
//! All reductions and optimisms at a node are expressed per observation of the
//! full training set: the reduction carries a `1 / (2n)` factor with the global
//! `n`, and the sandwich root optimism of a node holding `n_t` rows is scaled
//! by `n_t / n`. At the root both conventions coincide.

use crate::cir::{
    boundary_counts, max_cir_distribution_seeded, multi_feature_stump_optimism, CirConfig,
    CirMaxDistribution, LawCache, TauGrid,
};
use crate::data::{row_mask, Dataset, SortedIndex};
use crate::error::{Error, Result};
use crate::loss::DerivativeBuffers;
use crate::par::{join, map_indexed};
use crate::rng::{derive_seed, splitmix64};

/// Gradient and hessian totals of a set of rows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeStats {
    pub count: usize,
    pub g_sum: f64,
    pub h_sum: f64,
}

impl NodeStats {
    pub fn from_rows(rows: &[usize], d: &DerivativeBuffers) -> Self {
        rows.iter().fold(NodeStats::default(), |mut s, &r| {
            s.count += 1;
            s.g_sum += d.g[r];
            s.h_sum += d.h[r];
            s
        })
    }

    /// `G^2 / H`, twice the Taylor loss decrease from fitting this set's weight.
    #[inline]
    fn score(&self) -> f64 {
        self.g_sum * self.g_sum / self.h_sum
    }
}

/// Best split of one feature inside a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    /// Largest feature value routed left.
    pub threshold: f64,
    pub reduction: f64,
    pub left: NodeStats,
    pub right: NodeStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimismReport {
    /// Training-loss reduction of the best stump, `R_t`.
    pub reduction: f64,
    /// Sandwich root optimism, scaled by the node's share of the training set.
    pub c_root: f64,
    /// Optimism of the best stump over all splittable features.
    pub c_stump: f64,
    /// `reduction + c_root - c_stump`; the node splits iff this is positive.
    pub adjusted_gain: f64,
    pub best_feature: Option<usize>,
    pub best_threshold: f64,
    /// Child-weighted root optimism at the chosen split, same scale as
    /// `c_root`. Informational only.
    pub conditional_stump: f64,
    pub splittable_features: usize,
}

impl OptimismReport {
    pub fn is_split(&self) -> bool {
        self.adjusted_gain > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Leaf,
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    /// Newton weight `-G/H` of the rows reaching this node. Only leaf weights
    /// enter predictions.
    pub weight: f64,
    pub n_obs: usize,
    pub report: Option<OptimismReport>,
}

impl Node {
    pub fn leaf(weight: f64) -> Self {
        Node {
            kind: NodeKind::Leaf,
            weight,
            n_obs: 0,
            report: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf)
    }

    /// Walks down using `value(feature)`; left iff `x_j <= threshold`.
    #[inline]
    pub fn find_leaf(&self, value: impl Fn(usize) -> f64) -> &Node {
        let mut node = self;
        while let NodeKind::Internal {
            feature,
            threshold,
            left,
            right,
        } = &node.kind
        {
            node = if value(*feature) <= *threshold { left } else { right };
        }
        node
    }

    #[inline]
    pub fn predict_with(&self, value: impl Fn(usize) -> f64) -> f64 {
        self.find_leaf(value).weight
    }

    pub fn leaf_count(&self) -> usize {
        match &self.kind {
            NodeKind::Leaf => 1,
            NodeKind::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match &self.kind {
            NodeKind::Leaf => 0,
            NodeKind::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match &self.kind {
            NodeKind::Leaf => 1,
            NodeKind::Internal { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    /// Sum of leaf root optimisms: the optimism this tree would carry if its
    /// structure had been fixed in advance. Diagnostic only.
    pub fn fixed_structure_optimism(&self) -> f64 {
        match &self.kind {
            NodeKind::Leaf => self.report.map_or(0.0, |r| r.c_root),
            NodeKind::Internal { left, right, .. } => {
                left.fixed_structure_optimism() + right.fixed_structure_optimism()
            }
        }
    }

    /// Visits leaves left to right.
    pub fn leaves(&self) -> Vec<&Node> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match &node.kind {
                NodeKind::Leaf => out.push(node),
                NodeKind::Internal { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }
}

/// Newton step `-G/H` for a leaf.
pub fn leaf_weight(g_sum: f64, h_sum: f64) -> Result<f64> {
    if !(h_sum > 0.0) {
        return Err(Error::HessianDegenerate(h_sum));
    }
    Ok(-g_sum / h_sum)
}

/// Scans the split points of feature `j` inside the node. Returns `None` when
/// the feature takes a single value there.
///
/// Ties in reduction keep the smallest threshold.
pub fn best_split_for_feature(
    node_rows: &[usize],
    j: usize,
    derivs: &DerivativeBuffers,
    data: &Dataset,
    index: &SortedIndex,
) -> Option<SplitCandidate> {
    let mask = row_mask(data.n(), node_rows);
    let total = NodeStats::from_rows(node_rows, derivs);
    scan_feature(data.column(j), index.order(j), &mask, derivs, total, data.n())
}

fn scan_feature(
    col: &[f64],
    order: &[u32],
    mask: &[bool],
    derivs: &DerivativeBuffers,
    total: NodeStats,
    n_total: usize,
) -> Option<SplitCandidate> {
    let parent = total.score();
    let scale = 1.0 / (2.0 * n_total as f64);
    let mut left = NodeStats::default();
    let mut prev: Option<f64> = None;
    let mut best: Option<SplitCandidate> = None;
    for &r in order {
        let r = r as usize;
        if !mask[r] {
            continue;
        }
        let v = col[r];
        if let Some(p) = prev {
            if v != p {
                let right = NodeStats {
                    count: total.count - left.count,
                    g_sum: total.g_sum - left.g_sum,
                    h_sum: total.h_sum - left.h_sum,
                };
                let reduction = scale * (left.score() + right.score() - parent);
                if best.is_none_or(|b| reduction > b.reduction) {
                    best = Some(SplitCandidate {
                        threshold: p,
                        reduction,
                        left,
                        right,
                    });
                }
            }
        }
        left.count += 1;
        left.g_sum += derivs.g[r];
        left.h_sum += derivs.h[r];
        prev = Some(v);
    }
    best
}

/// Sandwich estimate of the root model's optimism on the node's own rows:
/// `sum (g_i + h_i w)^2 / (n_t sum h_i)`.
pub fn root_optimism(node_rows: &[usize], derivs: &DerivativeBuffers, w: f64) -> Result<f64> {
    if node_rows.is_empty() {
        return Err(Error::domain("root optimism of an empty node"));
    }
    let (num, h_sum) = node_rows.iter().fold((0.0, 0.0), |(num, hs), &r| {
        let e = derivs.g[r] + derivs.h[r] * w;
        (num + e * e, hs + derivs.h[r])
    });
    if !(h_sum > 0.0) {
        return Err(Error::HessianDegenerate(h_sum));
    }
    Ok(num / (node_rows.len() as f64 * h_sum))
}

/// Root optimism of each child, weighted by the child's share of the node.
pub fn conditional_stump_optimism(
    left_rows: &[usize],
    right_rows: &[usize],
    derivs: &DerivativeBuffers,
) -> Result<f64> {
    if left_rows.is_empty() || right_rows.is_empty() {
        return Err(Error::domain("conditional stump optimism needs two non-empty children"));
    }
    let n = (left_rows.len() + right_rows.len()) as f64;
    let mut total = 0.0;
    for rows in [left_rows, right_rows] {
        let s = NodeStats::from_rows(rows, derivs);
        let w = leaf_weight(s.g_sum, s.h_sum)?;
        total += root_optimism(rows, derivs, w)? * rows.len() as f64 / n;
    }
    Ok(total)
}

const ROOT_KEY: u64 = 1;

fn child_key(parent: u64, right: bool) -> u64 {
    splitmix64(parent.rotate_left(1) ^ if right { 0xA5A5_A5A5 } else { 0x5A5A_5A5A })
}

/// Everything a tree build needs besides the rows of the current node.
pub struct TreeBuilder<'a> {
    data: &'a Dataset,
    index: &'a SortedIndex,
    derivs: &'a DerivativeBuffers,
    cfg: &'a CirConfig,
    cache: Option<&'a LawCache>,
    tree_index: u64,
}

impl<'a> TreeBuilder<'a> {
    pub fn new(
        data: &'a Dataset,
        index: &'a SortedIndex,
        derivs: &'a DerivativeBuffers,
        cfg: &'a CirConfig,
    ) -> Self {
        TreeBuilder {
            data,
            index,
            derivs,
            cfg,
            cache: None,
            tree_index: 0,
        }
    }

    /// Shares fitted CIR laws between nodes with identical split grids.
    pub fn with_cache(mut self, cache: Option<&'a LawCache>) -> Self {
        self.cache = cache;
        self
    }

    /// Position of this tree in the ensemble; part of every node's seed.
    pub fn with_tree_index(mut self, tree_index: u64) -> Self {
        self.tree_index = tree_index;
        self
    }

    fn law(&self, grid: &TauGrid, node_key: u64, feature: usize) -> Result<CirMaxDistribution> {
        match self.cache {
            Some(cache) => cache.get_or_fit(grid, self.cfg),
            None => {
                let seed = derive_seed(self.cfg.seed, &[self.tree_index, node_key, feature as u64]);
                max_cir_distribution_seeded(grid, self.cfg, seed)
            }
        }
    }

    /// Split decision quantities for the node holding `rows`.
    pub fn evaluate_node(&self, rows: &[usize], node_key: u64) -> Result<OptimismReport> {
        if rows.is_empty() {
            return Err(Error::domain("cannot evaluate an empty node"));
        }
        let n_total = self.data.n();
        let mask = row_mask(n_total, rows);
        let total = NodeStats::from_rows(rows, self.derivs);
        let w = leaf_weight(total.g_sum, total.h_sum)?;
        let share = rows.len() as f64 / n_total as f64;
        let c_root = root_optimism(rows, self.derivs, w)? * share;

        let per_feature = map_indexed(self.cfg.execution, self.data.m(), |j| {
            let col = self.data.column(j);
            let order = self.index.order(j);
            let split = scan_feature(col, order, &mask, self.derivs, total, n_total);
            let law = match split {
                None => Ok(None),
                Some(_) => {
                    let counts = boundary_counts(col, order, &mask);
                    TauGrid::from_boundary_counts(&counts, rows.len(), self.cfg.epsilon)
                        .and_then(|grid| self.law(&grid, node_key, j))
                        .map(Some)
                }
            };
            law.map(|law| (split, law))
        });

        let mut best: Option<(usize, SplitCandidate)> = None;
        let mut laws = Vec::new();
        for (j, result) in per_feature.into_iter().enumerate() {
            let (split, law) = result?;
            if let (Some(split), Some(law)) = (split, law) {
                laws.push(law);
                if best.is_none_or(|(_, b)| split.reduction > b.reduction) {
                    best = Some((j, split));
                }
            }
        }

        let Some((feature, split)) = best else {
            return Ok(OptimismReport {
                reduction: f64::NEG_INFINITY,
                c_root,
                c_stump: c_root,
                adjusted_gain: f64::NEG_INFINITY,
                best_feature: None,
                best_threshold: f64::NAN,
                conditional_stump: 0.0,
                splittable_features: 0,
            });
        };

        let c_stump = multi_feature_stump_optimism(c_root, &laws, self.cfg)?;
        let (left_rows, right_rows) = partition(rows, self.data.column(feature), split.threshold);
        let conditional_stump = conditional_stump_optimism(&left_rows, &right_rows, self.derivs)? * share;
        Ok(OptimismReport {
            reduction: split.reduction,
            c_root,
            c_stump,
            adjusted_gain: split.reduction + c_root - c_stump,
            best_feature: Some(feature),
            best_threshold: split.threshold,
            conditional_stump,
            splittable_features: laws.len(),
        })
    }

    /// Grows a tree over every row of the dataset.
    pub fn build(&self) -> Result<Node> {
        let rows: Vec<usize> = (0..self.data.n()).collect();
        self.grow(rows, ROOT_KEY)
    }

    pub fn build_from(&self, rows: Vec<usize>) -> Result<Node> {
        if rows.is_empty() {
            return Err(Error::domain("cannot grow a tree from no rows"));
        }
        self.grow(rows, ROOT_KEY)
    }

    fn grow(&self, rows: Vec<usize>, key: u64) -> Result<Node> {
        let stats = NodeStats::from_rows(&rows, self.derivs);
        let weight = leaf_weight(stats.g_sum, stats.h_sum)?;
        let report = self.evaluate_node(&rows, key)?;
        let n_obs = rows.len();
        let kind = match report.best_feature {
            Some(feature) if report.is_split() => {
                let threshold = report.best_threshold;
                let (left_rows, right_rows) = partition(&rows, self.data.column(feature), threshold);
                drop(rows);
                let (left, right) = join(
                    self.cfg.execution,
                    || self.grow(left_rows, child_key(key, false)),
                    || self.grow(right_rows, child_key(key, true)),
                );
                NodeKind::Internal {
                    feature,
                    threshold,
                    left: Box::new(left?),
                    right: Box::new(right?),
                }
            }
            _ => NodeKind::Leaf,
        };
        Ok(Node {
            kind,
            weight,
            n_obs,
            report: Some(report),
        })
    }
}

fn partition(rows: &[usize], col: &[f64], threshold: f64) -> (Vec<usize>, Vec<usize>) {
    rows.iter().partition(|&&r| col[r] <= threshold)
}

/// Split report for a node, evaluated as the root of tree 0.
pub fn evaluate_node(
    node_rows: &[usize],
    derivs: &DerivativeBuffers,
    data: &Dataset,
    index: &SortedIndex,
    cfg: &CirConfig,
) -> Result<OptimismReport> {
    TreeBuilder::new(data, index, derivs, cfg).evaluate_node(node_rows, ROOT_KEY)
}

pub fn build_tree(
    rows: Vec<usize>,
    derivs: &DerivativeBuffers,
    data: &Dataset,
    index: &SortedIndex,
    cfg: &CirConfig,
) -> Result<Node> {
    TreeBuilder::new(data, index, derivs, cfg).build_from(rows)
}
