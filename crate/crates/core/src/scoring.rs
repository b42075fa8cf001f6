//! Bonferroni-corrected cluster score and sample-subset selection.
//!
//! Everything here is in natural-log units:
//! `ln C(D, N_c) + ln C(T_u, T_c) + sum_{i in I_c} ln p_i`.
//! Smaller is more significant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::ln_choose;

/// Log score of a cluster with `log_pvalues.len()` samples.
pub fn log_score(dim: usize, n_features: usize, t_u: usize, log_pvalues: &[f64]) -> Result<f64> {
    if n_features > dim {
        return Err(Error::InvalidArgument(format!("N_c = {n_features} exceeds D = {dim}")));
    }
    if log_pvalues.len() > t_u {
        return Err(Error::InvalidArgument(format!(
            "T_c = {} exceeds T_u = {t_u}",
            log_pvalues.len()
        )));
    }
    if let Some(bad) = log_pvalues.iter().find(|lp| !(**lp <= 0.0)) {
        return Err(Error::InvalidArgument(format!("log p-value {bad} is not <= 0")));
    }
    Ok(ln_choose(dim as u64, n_features as u64)
        + ln_choose(t_u as u64, log_pvalues.len() as u64)
        + log_pvalues.iter().sum::<f64>())
}

/// `ln C(t_u, k)` for every `k` in `0..=t_u`.
#[derive(Debug, Clone)]
pub struct LogBinomialRow {
    values: Vec<f64>,
}

impl LogBinomialRow {
    pub fn new(t_u: usize) -> Self {
        Self {
            values: (0..=t_u).map(|k| ln_choose(t_u as u64, k as u64)).collect(),
        }
    }

    pub fn t_u(&self) -> usize {
        self.values.len() - 1
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }
}

/// Result of the prefix scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSelection {
    /// Every input position, sorted by ascending log p-value (ties by position).
    pub order: Vec<usize>,
    /// Length of the selected prefix of `order`.
    pub size: usize,
    pub log_score: f64,
}

impl SubsetSelection {
    pub fn selected(&self) -> &[usize] {
        &self.order[..self.size]
    }
}

/// Positions sorted by ascending value, ties by position.
pub fn ascending_order(log_pvalues: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..log_pvalues.len()).collect();
    order.sort_unstable_by(|&a, &b| log_pvalues[a].total_cmp(&log_pvalues[b]).then(a.cmp(&b)));
    order
}

/// Scans every prefix of `order` of length at least `min_size` and returns
/// the best `(size, log_score)`; equal scores keep the shorter prefix.
pub fn best_prefix(
    log_pvalues: &[f64],
    order: &[usize],
    binomials: &LogBinomialRow,
    feature_term: f64,
    min_size: usize,
) -> Option<(usize, f64)> {
    let min_size = min_size.max(1);
    if order.len() < min_size {
        return None;
    }
    let mut cum = 0.0;
    let mut best: Option<(usize, f64)> = None;
    for (i, &pos) in order.iter().enumerate() {
        cum += log_pvalues[pos];
        let k = i + 1;
        if k < min_size {
            continue;
        }
        let s = feature_term + binomials.get(k) + cum;
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((k, s));
        }
    }
    best
}

/// Minimizes the log score over sample subsets for a fixed feature subset of
/// size `n_features`. Sorted prefixes are scanned exhaustively, which covers
/// the global optimum over all subsets.
pub fn optimal_sample_subset(
    log_pvalues: &[f64],
    dim: usize,
    n_features: usize,
    t_u: usize,
) -> Result<SubsetSelection> {
    optimal_sample_subset_min(log_pvalues, dim, n_features, t_u, 1)
}

/// As [`optimal_sample_subset`], restricted to subsets of at least `min_size` samples.
pub fn optimal_sample_subset_min(
    log_pvalues: &[f64],
    dim: usize,
    n_features: usize,
    t_u: usize,
    min_size: usize,
) -> Result<SubsetSelection> {
    if log_pvalues.is_empty() {
        return Err(Error::InvalidArgument("no samples to select from".into()));
    }
    if n_features > dim || log_pvalues.len() > t_u {
        return Err(Error::InvalidArgument(format!(
            "inconsistent sizes: N_c={n_features}, D={dim}, samples={}, T_u={t_u}",
            log_pvalues.len()
        )));
    }
    let order = ascending_order(log_pvalues);
    let binomials = LogBinomialRow::new(t_u);
    let feature_term = ln_choose(dim as u64, n_features as u64);
    let (size, log_score) = best_prefix(log_pvalues, &order, &binomials, feature_term, min_size)
        .ok_or_else(|| Error::InvalidArgument(format!("fewer than {min_size} samples")))?;
    Ok(SubsetSelection {
        order,
        size,
        log_score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example_score() {
        let lp = vec![1e-4f64.ln(); 3];
        let s = log_score(10, 2, 100, &lp).unwrap();
        let want = 45f64.ln() + 161_700f64.ln() + 3.0 * 1e-4f64.ln();
        assert!((s - want).abs() < 1e-10);
        assert!((s - 7.276_50e-6f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn empty_sample_set_scores_feature_term() {
        assert!((log_score(10, 3, 50, &[]).unwrap() - 120f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(log_score(3, 4, 10, &[]).is_err());
        assert!(log_score(3, 1, 1, &[-1.0, -1.0]).is_err());
        assert!(log_score(3, 1, 5, &[0.5]).is_err());
    }

    #[test]
    fn worked_example_selects_two() {
        let p = [0.001f64, 0.002, 0.5, 0.9];
        let lp: Vec<f64> = p.iter().map(|v| v.ln()).collect();
        let sel = optimal_sample_subset(&lp, 10, 1, 10).unwrap();
        assert_eq!(sel.size, 2);
        assert_eq!(sel.selected(), &[0, 1]);
    }

    #[test]
    fn unit_pvalues_pick_smallest_binomial() {
        let lp = vec![0.0; 6];
        let sel = optimal_sample_subset(&lp, 4, 1, 6).unwrap();
        // C(6, k) over k >= 1 is smallest at k = 6 (value 1).
        assert_eq!(sel.size, 6);
        let lp = vec![0.0; 3];
        let sel = optimal_sample_subset(&lp, 4, 1, 10).unwrap();
        // Only prefixes up to 3 exist; C(10, 1) = 10 is the minimum among them.
        assert_eq!(sel.size, 1);
    }

    #[test]
    fn floor_ties_ordered_by_position() {
        let floor = crate::pvalue::P_MIN.ln();
        let lp = vec![-1.0, floor, -2.0, floor];
        assert_eq!(ascending_order(&lp), vec![1, 3, 2, 0]);
    }

    #[test]
    fn minimum_size_is_respected() {
        let lp = vec![-50.0, -0.1, -0.1];
        let sel = optimal_sample_subset_min(&lp, 2, 1, 10, 2).unwrap();
        assert_eq!(sel.size, 2);
        assert!(optimal_sample_subset_min(&lp, 2, 1, 10, 4).is_err());
    }
}
