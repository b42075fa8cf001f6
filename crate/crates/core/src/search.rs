//! Beam search over feature subsets and sequential cluster extraction.
//!
//! Each extraction round scores every singleton feature subset, then grows
//! the `beam_width` best subsets of order `K - 1` by one feature at a time up
//! to `k_max`. Every candidate gets its own joint p-values and its own optimal
//! sample subset; the overall minimum-score candidate is extracted and its
//! samples leave the batch before the next round.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataBatch;
use crate::deptree::{build_tree, clamp_log_p, DependenceTree, Factorization};
use crate::error::{Error, Result};
use crate::normal::ln_choose;
use crate::nullmodel::{pair_count, pair_index, NullModel};
use crate::scoring::{ascending_order, best_prefix, LogBinomialRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Largest feature subset considered.
    pub k_max: usize,
    /// Subsets kept from each order for accretion.
    pub beam_width: usize,
    pub max_clusters: Option<usize>,
    pub min_cluster_size: usize,
    /// Stop extracting once the best log score rises above this value.
    #[serde(default)]
    pub score_threshold: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            k_max: 6,
            beam_width: 500,
            max_clusters: None,
            min_cluster_size: 2,
            score_threshold: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.k_max == 0 || self.k_max > dim {
            return Err(Error::InvalidArgument(format!("k_max = {} must lie in 1..={dim}", self.k_max)));
        }
        if self.beam_width == 0 {
            return Err(Error::InvalidArgument("beam_width must be positive".into()));
        }
        if self.min_cluster_size == 0 {
            return Err(Error::InvalidArgument("min_cluster_size must be positive".into()));
        }
        Ok(())
    }
}

/// How a candidate's per-sample joint p-value is assembled from the null.
#[derive(Debug, Clone, PartialEq)]
pub enum JointModel {
    /// Dependence tree rebuilt for every candidate subset.
    ClusterTree,
    /// Product of every pairwise p-value in the subset (singleton when `N_c = 1`).
    IndependentPairs,
    /// Product of singleton p-values.
    IndependentSingles,
    /// One tree over all features, restricted to the candidate subset.
    GlobalTree(DependenceTree),
}

impl JointModel {
    pub fn factorization(&self, model: &NullModel, subset: &[usize]) -> Factorization {
        match self {
            JointModel::ClusterTree => build_tree(model, subset).factorization(),
            JointModel::IndependentPairs => {
                let mut f = subset.to_vec();
                f.sort_unstable();
                f.dedup();
                if f.len() == 1 {
                    return Factorization {
                        edges: vec![],
                        singles: vec![(f[0], 1.0)],
                    };
                }
                let edges = f
                    .iter()
                    .enumerate()
                    .flat_map(|(i, &a)| f[i + 1..].iter().map(move |&b| (a, b)))
                    .collect();
                Factorization { edges, singles: vec![] }
            }
            JointModel::IndependentSingles => {
                let mut f = subset.to_vec();
                f.sort_unstable();
                f.dedup();
                Factorization {
                    edges: vec![],
                    singles: f.into_iter().map(|v| (v, 1.0)).collect(),
                }
            }
            JointModel::GlobalTree(tree) => tree.induced(subset).factorization(),
        }
    }
}

/// Log singleton and pair p-values of every sample, computed once per batch.
#[derive(Debug, Clone)]
pub struct PValueTable {
    n: usize,
    dim: usize,
    pairs: usize,
    log_single: Vec<f64>,
    log_pair: Vec<f64>,
}

impl PValueTable {
    pub fn build(model: &NullModel, batch: &DataBatch) -> Result<Self> {
        let dim = model.dim();
        if batch.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: batch.dim(),
            });
        }
        let pairs = pair_count(dim);
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..batch.len())
            .into_par_iter()
            .map(|i| {
                let x = batch.row(i);
                let single = (0..dim).map(|j| model.singleton_pvalue(j, x[j]).ln()).collect();
                let mut pair = Vec::with_capacity(pairs);
                for j in 0..dim {
                    for k in j + 1..dim {
                        pair.push(model.pair_pvalue(j, k, x[j], x[k]).ln());
                    }
                }
                (single, pair)
            })
            .collect();
        let mut log_single = Vec::with_capacity(batch.len() * dim);
        let mut log_pair = Vec::with_capacity(batch.len() * pairs);
        for (s, p) in rows {
            log_single.extend(s);
            log_pair.extend(p);
        }
        Ok(Self {
            n: batch.len(),
            dim,
            pairs,
            log_single,
            log_pair,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_single(&self, i: usize, j: usize) -> f64 {
        self.log_single[i * self.dim + j]
    }

    pub fn log_pair(&self, i: usize, j: usize, k: usize) -> f64 {
        self.log_pair[i * self.pairs + pair_index(self.dim, j, k)]
    }

    /// Clamped log joint p-value of sample `i` under `fact`.
    pub fn log_joint(&self, fact: &Factorization, i: usize) -> f64 {
        fact.log_joint(|f| self.log_single(i, f), |a, b| self.log_pair(i, a, b))
    }

    fn compile(&self, fact: &Factorization) -> Compiled {
        Compiled {
            pair_cols: fact.edges.iter().map(|&(a, b)| pair_index(self.dim, a, b)).collect(),
            singles: fact.singles.clone(),
        }
    }

    fn log_joint_compiled(&self, c: &Compiled, i: usize) -> f64 {
        let pair_row = &self.log_pair[i * self.pairs..(i + 1) * self.pairs];
        let single_row = &self.log_single[i * self.dim..(i + 1) * self.dim];
        let mut acc = 0.0;
        for &col in &c.pair_cols {
            acc += pair_row[col];
        }
        for &(f, coeff) in &c.singles {
            acc += coeff * single_row[f];
        }
        clamp_log_p(acc)
    }
}

/// Factorization with pair lookups resolved to table columns. Summation
/// order matches [`Factorization::log_joint`].
struct Compiled {
    pair_cols: Vec<usize>,
    singles: Vec<(usize, f64)>,
}

/// A scored `(sample subset, feature subset)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCandidate {
    pub features: Vec<usize>,
    /// Batch row indices, ascending by joint p-value.
    pub samples: Vec<usize>,
    pub log_score: f64,
    /// Natural-log joint p-value of each entry of `samples`.
    pub per_sample_log_p: Vec<f64>,
    /// Best log score found at each order `1..=k_max` in this round.
    #[serde(default)]
    pub per_order_best: Vec<f64>,
    /// Remaining batch size when this cluster was extracted.
    #[serde(default)]
    pub batch_size: usize,
}

/// Everything one detection run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub method: String,
    pub clusters: Vec<ClusterCandidate>,
    /// Complete ranking of batch rows: cluster by cluster, then the undetected tail.
    pub ranked_samples: Vec<usize>,
    /// Identifiers matching `ranked_samples` one for one.
    #[serde(default)]
    pub ranked_ids: Vec<String>,
}

impl DetectionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

struct Scored {
    features: Vec<usize>,
    log_score: f64,
    /// Selected positions into `remaining`, ascending by log p.
    selected: Vec<usize>,
    selected_log_p: Vec<f64>,
    all_log_p: Vec<f64>,
}

/// Runs detection against one batch with precomputed p-values.
pub struct Detector<'a> {
    model: &'a NullModel,
    table: PValueTable,
    joint: JointModel,
    config: SearchConfig,
    ids: Vec<String>,
}

impl<'a> Detector<'a> {
    pub fn new(model: &'a NullModel, batch: &DataBatch, joint: JointModel, config: SearchConfig) -> Result<Self> {
        config.validate(model.dim())?;
        let table = PValueTable::build(model, batch)?;
        Ok(Self {
            model,
            table,
            joint,
            config,
            ids: (0..batch.len()).map(|i| batch.sample_id(i)).collect(),
        })
    }

    pub fn table(&self) -> &PValueTable {
        &self.table
    }

    fn evaluate(&self, features: Vec<usize>, remaining: &[usize], binomials: &LogBinomialRow) -> Option<Scored> {
        let fact = self.joint.factorization(self.model, &features);
        let compiled = self.table.compile(&fact);
        let log_p: Vec<f64> = remaining
            .iter()
            .map(|&i| self.table.log_joint_compiled(&compiled, i))
            .collect();
        let order = ascending_order(&log_p);
        let feature_term = ln_choose(self.model.dim() as u64, features.len() as u64);
        let (size, log_score) =
            best_prefix(&log_p, &order, binomials, feature_term, self.config.min_cluster_size)?;
        let selected = order[..size].to_vec();
        let selected_log_p = selected.iter().map(|&p| log_p[p]).collect();
        Some(Scored {
            features,
            log_score,
            selected,
            selected_log_p,
            all_log_p: log_p,
        })
    }

    /// Best candidate over all orders for the samples in `remaining`
    /// (batch row indices). `None` once fewer than `min_cluster_size` remain.
    /// `best_seen` tracks each row's smallest log joint p-value across candidates.
    pub fn detect_one_cluster(&self, remaining: &[usize], best_seen: &mut [f64]) -> Option<ClusterCandidate> {
        let t_u = remaining.len();
        if t_u < self.config.min_cluster_size || t_u == 0 {
            return None;
        }
        let dim = self.model.dim();
        let binomials = LogBinomialRow::new(t_u);
        let mut level: Vec<Vec<usize>> = (0..dim).map(|f| vec![f]).collect();
        let mut best: Option<Scored> = None;
        let mut per_order_best = Vec::with_capacity(self.config.k_max);

        for order in 1..=self.config.k_max {
            if level.is_empty() {
                break;
            }
            let mut scored: Vec<Scored> = level
                .into_par_iter()
                .filter_map(|f| self.evaluate(f, remaining, &binomials))
                .collect();
            for s in &scored {
                for (pos, lp) in s.all_log_p.iter().enumerate() {
                    let slot = &mut best_seen[remaining[pos]];
                    if *lp < *slot {
                        *slot = *lp;
                    }
                }
            }
            scored.sort_by(|a, b| a.log_score.total_cmp(&b.log_score).then_with(|| a.features.cmp(&b.features)));
            per_order_best.push(scored.first().map_or(f64::INFINITY, |s| s.log_score));

            let mut next = BTreeSet::new();
            if order < self.config.k_max {
                for s in scored.iter().take(self.config.beam_width) {
                    for f in 0..dim {
                        if s.features.binary_search(&f).is_err() {
                            let mut grown = s.features.clone();
                            grown.insert(grown.partition_point(|&g| g < f), f);
                            next.insert(grown);
                        }
                    }
                }
            }
            if let Some(top) = scored.into_iter().next() {
                if best.as_ref().is_none_or(|b| top.log_score < b.log_score) {
                    best = Some(top);
                }
            }
            level = next.into_iter().collect();
        }

        best.map(|b| ClusterCandidate {
            samples: b.selected.iter().map(|&p| remaining[p]).collect(),
            per_sample_log_p: b.selected_log_p,
            features: b.features,
            log_score: b.log_score,
            per_order_best,
            batch_size: t_u,
        })
    }

    /// Extracts clusters until the batch is exhausted or a configured limit
    /// is hit, then appends the undetected rows by their best joint p-value.
    pub fn detect_all(&self, method: &str) -> DetectionReport {
        let n = self.table.len();
        let mut remaining: Vec<usize> = (0..n).collect();
        let mut best_seen = vec![0.0f64; n];
        let mut clusters = Vec::new();
        let mut ranked = Vec::with_capacity(n);
        while self.config.max_clusters.is_none_or(|m| clusters.len() < m) {
            let Some(c) = self.detect_one_cluster(&remaining, &mut best_seen) else {
                break;
            };
            if self.config.score_threshold.is_some_and(|t| c.log_score > t) {
                break;
            }
            let taken: BTreeSet<usize> = c.samples.iter().copied().collect();
            remaining.retain(|i| !taken.contains(i));
            ranked.extend_from_slice(&c.samples);
            log::debug!(
                "cluster {}: features {:?}, {} samples, log score {:.3}",
                clusters.len() + 1,
                c.features,
                c.samples.len(),
                c.log_score
            );
            clusters.push(c);
        }
        remaining.sort_by(|&a, &b| best_seen[a].total_cmp(&best_seen[b]).then(a.cmp(&b)));
        ranked.extend_from_slice(&remaining);
        DetectionReport {
            method: method.to_string(),
            clusters,
            ranked_ids: ranked.iter().map(|&i| self.ids[i].clone()).collect(),
            ranked_samples: ranked,
        }
    }
}

/// One extraction round over the whole batch.
pub fn detect_one_cluster(
    model: &NullModel,
    batch: &DataBatch,
    joint: JointModel,
    config: &SearchConfig,
) -> Result<Option<ClusterCandidate>> {
    let det = Detector::new(model, batch, joint, config.clone())?;
    let all: Vec<usize> = (0..batch.len()).collect();
    let mut seen = vec![0.0; batch.len()];
    Ok(det.detect_one_cluster(&all, &mut seen))
}

/// Sequential extraction over the whole batch.
pub fn detect_all(
    model: &NullModel,
    batch: &DataBatch,
    joint: JointModel,
    config: &SearchConfig,
    method: &str,
) -> Result<DetectionReport> {
    Ok(Detector::new(model, batch, joint, config.clone())?.detect_all(method))
}
