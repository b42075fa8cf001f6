//! Cluster-specific dependence trees and tree-factorized joint p-values.
//!
//! The joint p-value over a tree is evaluated in the root-free form
//!
//! ```text
//! log p = sum_{(u,v) in edges} log p_uv  +  sum_v (1 - deg v) log p_v
//! ```
//!
//! which equals the rooted chain of conditionals whenever the pair models
//! agree with the univariate ones, and does not depend on a root otherwise.

use serde::{Deserialize, Serialize};

use crate::nullmodel::NullModel;
use crate::pvalue::P_MIN;

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already connected.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Kruskal's maximum-weight spanning tree over `nodes` (sorted, distinct).
/// Equal weights are resolved in lexicographic edge order.
pub fn max_spanning_tree(nodes: &[usize], weight: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let n = nodes.len();
    let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            edges.push((a, b, weight(nodes[a], nodes[b])));
        }
    }
    // Stable sort keeps the lexicographic order among ties.
    edges.sort_by(|x, y| y.2.total_cmp(&x.2));
    let mut uf = UnionFind::new(n);
    let mut tree = Vec::with_capacity(n.saturating_sub(1));
    for (a, b, _) in edges {
        if uf.union(a, b) {
            tree.push((nodes[a], nodes[b]));
            if tree.len() + 1 == n {
                break;
            }
        }
    }
    tree.sort_unstable();
    tree
}

/// A tree (or forest) over a feature subset, ready for factorized evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependenceTree {
    features: Vec<usize>,
    edges: Vec<(usize, usize)>,
    root: usize,
}

fn normalize_subset(subset: &[usize]) -> Vec<usize> {
    let mut f = subset.to_vec();
    f.sort_unstable();
    f.dedup();
    f
}

/// Maximum mutual-information spanning tree over `subset`.
pub fn build_tree(model: &NullModel, subset: &[usize]) -> DependenceTree {
    DependenceTree::from_weights(subset, |a, b| model.mi(a, b))
}

impl DependenceTree {
    pub fn from_weights(subset: &[usize], weight: impl Fn(usize, usize) -> f64) -> Self {
        let features = normalize_subset(subset);
        assert!(!features.is_empty(), "dependence tree needs at least one feature");
        let edges = max_spanning_tree(&features, weight);
        Self {
            root: features[0],
            features,
            edges,
        }
    }

    /// Builds from explicit edges; they must connect `subset` without cycles
    /// for this to be a tree, otherwise it is a forest.
    pub fn from_edges(subset: &[usize], edges: &[(usize, usize)]) -> Self {
        let features = normalize_subset(subset);
        let mut edges: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        edges.sort_unstable();
        Self {
            root: features[0],
            features,
            edges,
        }
    }

    /// Edges of this tree whose endpoints both lie in `subset`.
    pub fn induced(&self, subset: &[usize]) -> Self {
        let features = normalize_subset(subset);
        let edges = self
            .edges
            .iter()
            .copied()
            .filter(|(a, b)| features.binary_search(a).is_ok() && features.binary_search(b).is_ok())
            .collect();
        Self {
            root: features[0],
            features,
            edges,
        }
    }

    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn degree(&self, f: usize) -> usize {
        self.edges.iter().filter(|(a, b)| *a == f || *b == f).count()
    }

    pub fn total_weight(&self, weight: impl Fn(usize, usize) -> f64) -> f64 {
        self.edges.iter().map(|&(a, b)| weight(a, b)).sum()
    }

    /// Connected and acyclic over its features.
    pub fn is_spanning_tree(&self) -> bool {
        if self.edges.len() + 1 != self.features.len() {
            return false;
        }
        let pos = |f: usize| self.features.binary_search(&f).ok();
        let mut uf = UnionFind::new(self.features.len());
        self.edges.iter().all(|&(a, b)| match (pos(a), pos(b)) {
            (Some(x), Some(y)) => uf.union(x, y),
            _ => false,
        })
    }

    pub fn factorization(&self) -> Factorization {
        let singles = self
            .features
            .iter()
            .filter_map(|&f| {
                let coeff = 1.0 - self.degree(f) as f64;
                (coeff != 0.0).then_some((f, coeff))
            })
            .collect();
        Factorization {
            edges: self.edges.clone(),
            singles,
        }
    }
}

/// Edge list and per-node exponents of a tree-factorized joint p-value.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub edges: Vec<(usize, usize)>,
    /// `(feature, 1 - degree)` for every node whose exponent is nonzero.
    pub singles: Vec<(usize, f64)>,
}

impl Factorization {
    /// Clamped natural-log joint p-value from per-feature and per-pair log p-values.
    pub fn log_joint(&self, log_single: impl Fn(usize) -> f64, log_pair: impl Fn(usize, usize) -> f64) -> f64 {
        let mut acc = 0.0;
        for &(a, b) in &self.edges {
            acc += log_pair(a, b);
        }
        for &(f, c) in &self.singles {
            acc += c * log_single(f);
        }
        clamp_log_p(acc)
    }
}

pub fn clamp_log_p(lp: f64) -> f64 {
    if lp.is_nan() {
        return P_MIN.ln();
    }
    lp.clamp(P_MIN.ln(), 0.0)
}

/// Natural log of the tree-factorized joint p-value of a full sample row.
pub fn log_joint_pvalue(model: &NullModel, tree: &DependenceTree, x: &[f64]) -> f64 {
    tree.factorization().log_joint(
        |f| model.singleton_pvalue(f, x[f]).ln(),
        |a, b| model.pair_pvalue(a, b, x[a], x[b]).ln(),
    )
}

/// Tree-factorized joint p-value of a full sample row, in `[P_MIN, 1]`.
pub fn joint_pvalue(model: &NullModel, tree: &DependenceTree, x: &[f64]) -> f64 {
    log_joint_pvalue(model, tree, x).exp().max(P_MIN)
}
