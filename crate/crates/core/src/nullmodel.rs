//! The null hypothesis: every per-feature and per-feature-pair mixture,
//! plus the pairwise mutual-information matrix used as tree edge weights.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DataBatch;
use crate::em::{derive_seed, EmConfig, SAMPLES_PER_COMPONENT};
use crate::error::{Error, Result};
use crate::gmm::{fit_bivariate, fit_univariate, BivariateGmm, UnivariateGmm};
use crate::pvalue;

pub const FORMAT_VERSION: u32 = 1;
pub const MIN_TRAIN_SIZE: usize = SAMPLES_PER_COMPONENT;
pub const MIN_MI_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub em: EmConfig,
    /// Monte-Carlo draws per pair for mutual information.
    pub mi_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            mi_samples: 1_000_000,
        }
    }
}

impl TrainConfig {
    /// Short hex digest identifying this configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub j: usize,
    pub k: usize,
    pub model: BivariateGmm,
}

/// Per-model fitting diagnostics kept alongside the parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub config_hash: String,
    pub seed: u64,
    /// Features whose column had zero variance.
    #[serde(default)]
    pub degenerate_features: Vec<usize>,
    #[serde(default)]
    pub feature_names: Vec<String>,
}

/// Immutable after training; share freely across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullModel {
    pub version: u32,
    #[serde(rename = "D")]
    dim: usize,
    #[serde(rename = "T_l")]
    train_size: usize,
    univariate: Vec<UnivariateGmm>,
    bivariate: Vec<PairModel>,
    mi: Vec<Vec<f64>>,
    #[serde(default)]
    metadata: TrainingMetadata,
}

/// Position of the unordered pair `(j, k)` in the flattened upper triangle.
pub fn pair_index(dim: usize, j: usize, k: usize) -> usize {
    let (a, b) = if j < k { (j, k) } else { (k, j) };
    debug_assert!(a != b && b < dim);
    a * (2 * dim - a - 1) / 2 + (b - a - 1)
}

pub fn pair_count(dim: usize) -> usize {
    dim * dim.saturating_sub(1) / 2
}

/// Monte-Carlo mutual information of a bivariate mixture; deterministic in `seed`.
pub fn estimate_mi(pair: &BivariateGmm, samples: usize, seed: u64) -> Result<f64> {
    if samples < MIN_MI_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "mutual information needs at least {MIN_MI_SAMPLES} samples, got {samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(pair.mutual_information(samples, &mut rng))
}

/// Fits every first- and second-order mixture on `batch` and estimates
/// pairwise mutual information. Labels, if any, are ignored.
pub fn train_null(batch: &DataBatch, config: &TrainConfig) -> Result<NullModel> {
    let dim = batch.dim();
    let n = batch.len();
    if dim == 0 {
        return Err(Error::DataQuality("training batch has no features".into()));
    }
    if n < MIN_TRAIN_SIZE {
        return Err(Error::DataQuality(format!(
            "training batch has {n} rows; at least {MIN_TRAIN_SIZE} are required"
        )));
    }
    for (i, row) in batch.rows().enumerate() {
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: i + 1,
                column: batch.feature_names()[j].clone(),
            });
        }
    }
    let seed = config.em.seed;

    let univariate: Vec<_> = (0..dim)
        .into_par_iter()
        .map(|j| {
            let em = EmConfig {
                seed: derive_seed(seed, &[1, j as u64]),
                ..config.em.clone()
            };
            fit_univariate(&batch.column(j), &em)
        })
        .collect::<Result<_>>()?;

    let pairs: Vec<(usize, usize)> = (0..dim).flat_map(|j| (j + 1..dim).map(move |k| (j, k))).collect();
    let bivariate: Vec<(PairModel, f64)> = pairs
        .par_iter()
        .map(|&(j, k)| {
            let em = EmConfig {
                seed: derive_seed(seed, &[2, j as u64, k as u64]),
                ..config.em.clone()
            };
            let fit = fit_bivariate(&batch.column_pair(j, k), &em)?;
            let mi = estimate_mi(&fit.model, config.mi_samples, derive_seed(seed, &[3, j as u64, k as u64]))?;
            Ok((PairModel { j, k, model: fit.model }, mi))
        })
        .collect::<Result<_>>()?;

    let mut mi = vec![vec![0.0; dim]; dim];
    for (p, v) in &bivariate {
        mi[p.j][p.k] = *v;
        mi[p.k][p.j] = *v;
    }
    let degenerate_features = univariate
        .iter()
        .enumerate()
        .filter(|(_, f)| f.degenerate)
        .map(|(j, _)| j)
        .collect();

    let model = NullModel {
        version: FORMAT_VERSION,
        dim,
        train_size: n,
        univariate: univariate.into_iter().map(|f| f.model).collect(),
        bivariate: bivariate.into_iter().map(|(p, _)| p).collect(),
        mi,
        metadata: TrainingMetadata {
            config_hash: config.hash(),
            seed,
            degenerate_features,
            feature_names: batch.feature_names().to_vec(),
        },
    };
    model.validate()?;
    Ok(model)
}

impl NullModel {
    /// Assembles a model from parts, e.g. for hand-built fixtures.
    pub fn from_parts(
        univariate: Vec<UnivariateGmm>,
        bivariate: Vec<BivariateGmm>,
        mi: Vec<Vec<f64>>,
        train_size: usize,
    ) -> Result<Self> {
        let dim = univariate.len();
        let pairs: Vec<(usize, usize)> = (0..dim).flat_map(|j| (j + 1..dim).map(move |k| (j, k))).collect();
        if bivariate.len() != pairs.len() {
            return Err(Error::InvalidArgument(format!(
                "{} pair models for {dim} features (need {})",
                bivariate.len(),
                pairs.len()
            )));
        }
        let m = Self {
            version: FORMAT_VERSION,
            dim,
            train_size,
            univariate,
            bivariate: pairs
                .into_iter()
                .zip(bivariate)
                .map(|((j, k), model)| PairModel { j, k, model })
                .collect(),
            mi,
            metadata: TrainingMetadata::default(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Version {
                found: self.version,
                expected: FORMAT_VERSION,
            });
        }
        let d = self.dim;
        if self.univariate.len() != d {
            return Err(Error::InvalidArgument(format!("{} univariate models for D={d}", self.univariate.len())));
        }
        if self.bivariate.len() != pair_count(d) {
            return Err(Error::InvalidArgument(format!("{} bivariate models for D={d}", self.bivariate.len())));
        }
        for (idx, p) in self.bivariate.iter().enumerate() {
            if p.j >= p.k || p.k >= d || pair_index(d, p.j, p.k) != idx {
                return Err(Error::InvalidArgument(format!("pair ({}, {}) out of order", p.j, p.k)));
            }
            p.model.validate()?;
        }
        for u in &self.univariate {
            u.validate()?;
        }
        if self.mi.len() != d || self.mi.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("mutual information matrix has wrong shape".into()));
        }
        for j in 0..d {
            if self.mi[j][j] != 0.0 {
                return Err(Error::InvalidArgument("mutual information diagonal must be zero".into()));
            }
            for k in 0..d {
                let v = self.mi[j][k];
                if !(v >= 0.0) || v != self.mi[k][j] {
                    return Err(Error::InvalidArgument(format!("mutual information ({j}, {k}) invalid")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn train_size(&self) -> usize {
        self.train_size
    }

    pub fn metadata(&self) -> &TrainingMetadata {
        &self.metadata
    }

    pub fn univariate(&self, j: usize) -> &UnivariateGmm {
        &self.univariate[j]
    }

    /// Model for the unordered pair; slot 0 is always the smaller index.
    pub fn bivariate(&self, j: usize, k: usize) -> &BivariateGmm {
        &self.bivariate[pair_index(self.dim, j, k)].model
    }

    pub fn pairs(&self) -> &[PairModel] {
        &self.bivariate
    }

    pub fn mi(&self, j: usize, k: usize) -> f64 {
        self.mi[j][k]
    }

    pub fn mi_matrix(&self) -> &[Vec<f64>] {
        &self.mi
    }

    pub fn singleton_pvalue(&self, j: usize, x: f64) -> f64 {
        pvalue::singleton_pvalue(&self.univariate[j], x)
    }

    /// Pair p-value of features `j` and `k` (any order) at `x_j`, `x_k`.
    pub fn pair_pvalue(&self, j: usize, k: usize, xj: f64, xk: f64) -> f64 {
        let pt = if j < k { [xj, xk] } else { [xk, xj] };
        pvalue::pair_pvalue(self.bivariate(j, k), pt)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_index_enumerates_upper_triangle() {
        let d = 5;
        let mut expect = 0;
        for j in 0..d {
            for k in j + 1..d {
                assert_eq!(pair_index(d, j, k), expect);
                assert_eq!(pair_index(d, k, j), expect);
                expect += 1;
            }
        }
        assert_eq!(expect, pair_count(d));
    }

    #[test]
    fn too_few_mi_samples_rejected() {
        let m = BivariateGmm::normal([0.0, 0.0], [1.0, 1.0], 0.0);
        assert!(estimate_mi(&m, 100, 0).is_err());
    }

    #[test]
    fn tiny_batch_rejected() {
        let b = DataBatch::from_rows(&vec![vec![1.0, 2.0]; 3], 2).unwrap();
        assert!(matches!(train_null(&b, &TrainConfig::default()), Err(Error::DataQuality(_))));
    }

    #[test]
    fn wrong_version_rejected() {
        let m = NullModel::from_parts(
            vec![UnivariateGmm::normal(0.0, 1.0); 2],
            vec![BivariateGmm::normal([0.0, 0.0], [1.0, 1.0], 0.0)],
            vec![vec![0.0, 0.1], vec![0.1, 0.0]],
            100,
        )
        .unwrap();
        let json = m.to_json().unwrap().replace("\"version\": 1", "\"version\": 7");
        assert!(matches!(NullModel::from_json(&json), Err(Error::Version { found: 7, .. })));
    }
}
