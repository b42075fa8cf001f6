//! Synthetic batches with low-order anomalous clusters.
//!
//! Normal samples are `N(0, I)`. Each anomalous cluster matches the normal
//! distribution everywhere except one informative feature, whose mean is
//! shifted by `shift` standard deviations. A fraction of the normal samples
//! becomes the training set; the rest plus every anomaly forms the test batch.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::DataBatch;
use crate::error::{Error, Result};

pub const NORMAL_LABEL: &str = "normal";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub dim: usize,
    /// Total number of generated samples, train and test together.
    pub batch_size: usize,
    /// Share of the test batch taken by each anomalous cluster.
    pub anomaly_fractions: Vec<f64>,
    /// Shifted feature of each cluster.
    pub informative: Vec<usize>,
    /// Mean shift in normal standard deviations.
    pub shift: f64,
    /// Share of the normal samples used for training.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            dim: 10,
            batch_size: 10_000,
            anomaly_fractions: vec![0.025, 0.025],
            informative: vec![7, 2],
            shift: 2.0,
            train_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Sample counts implied by a spec.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticCounts {
    pub train: usize,
    pub test_normal: usize,
    pub per_cluster: Vec<usize>,
}

impl SyntheticCounts {
    pub fn test(&self) -> usize {
        self.test_normal + self.per_cluster.iter().sum::<usize>()
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if self.anomaly_fractions.len() != self.informative.len() {
            return bad(format!(
                "{} anomaly fractions for {} informative features",
                self.anomaly_fractions.len(),
                self.informative.len()
            ));
        }
        if let Some(&f) = self.informative.iter().find(|&&f| f >= self.dim) {
            return bad(format!("informative feature {f} is out of range for dim {}", self.dim));
        }
        let mut sorted = self.informative.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.informative.len() {
            return bad("informative features must be distinct".into());
        }
        if self.anomaly_fractions.iter().any(|f| !(*f >= 0.0)) {
            return bad("anomaly fractions must be non-negative".into());
        }
        if !(self.anomaly_fractions.iter().sum::<f64>() < 1.0) {
            return bad("anomaly fractions must sum to less than 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} must lie in (0, 1)", self.train_fraction));
        }
        if !self.shift.is_finite() {
            return bad("shift must be finite".into());
        }
        Ok(())
    }

    /// Cluster sizes are fractions of the test batch, so the test batch size
    /// `T` solves `T = (1 - r) * normals + anomalies` with `normals + anomalies = batch_size`.
    pub fn counts(&self) -> Result<SyntheticCounts> {
        self.validate()?;
        let r = self.train_fraction;
        let total_frac: f64 = self.anomaly_fractions.iter().sum();
        let n = self.batch_size as f64;
        let test_estimate = (1.0 - r) * n / (1.0 - r * total_frac);
        let per_cluster: Vec<usize> = self
            .anomaly_fractions
            .iter()
            .map(|f| (f * test_estimate).round() as usize)
            .collect();
        let anomalies: usize = per_cluster.iter().sum();
        let normals = self
            .batch_size
            .checked_sub(anomalies)
            .ok_or_else(|| Error::InvalidArgument("batch too small for its anomalies".into()))?;
        let train = (r * normals as f64).round() as usize;
        Ok(SyntheticCounts {
            train,
            test_normal: normals - train,
            per_cluster,
        })
    }
}

pub fn cluster_label(c: usize) -> String {
    format!("cluster_{}", c + 1)
}

/// Returns `(train, test)`; only the test batch carries labels.
pub fn generate(spec: &SyntheticSpec) -> Result<(DataBatch, DataBatch)> {
    let counts = spec.counts()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draw = |shifted: Option<usize>| -> Vec<f64> {
        let mut row: Vec<f64> = (0..spec.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Some(f) = shifted {
            row[f] += spec.shift;
        }
        row
    };

    let normals: Vec<Vec<f64>> = (0..counts.train + counts.test_normal).map(|_| draw(None)).collect();
    let mut test_rows: Vec<(Vec<f64>, String)> = Vec::with_capacity(counts.test());
    for (c, (&size, &f)) in counts.per_cluster.iter().zip(&spec.informative).enumerate() {
        for _ in 0..size {
            test_rows.push((draw(Some(f)), cluster_label(c)));
        }
    }

    let mut order: Vec<usize> = (0..normals.len()).collect();
    order.shuffle(&mut rng);
    let (train_idx, test_idx) = order.split_at(counts.train);
    let train_rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| normals[i].clone()).collect();
    test_rows.extend(test_idx.iter().map(|&i| (normals[i].clone(), NORMAL_LABEL.to_string())));
    test_rows.shuffle(&mut rng);

    let train = DataBatch::from_rows(&train_rows, spec.dim)?;
    let (rows, labels): (Vec<Vec<f64>>, Vec<String>) = test_rows.into_iter().unzip();
    let test = DataBatch::from_rows(&rows, spec.dim)?.with_labels(labels)?;
    Ok((train, test))
}

/// Writes `train.csv` and `test.csv` into `dir`.
pub fn write_synthetic(spec: &SyntheticSpec, dir: impl AsRef<Path>) -> Result<(DataBatch, DataBatch)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (train, test) = generate(spec)?;
    train.write_csv_path(dir.join("train.csv"))?;
    test.write_csv_path(dir.join("test.csv"))?;
    Ok((train, test))
}

/// Error of the midpoint threshold on cluster `c`'s informative feature,
/// averaged over the two class-conditional error rates.
pub fn threshold_error(spec: &SyntheticSpec, test: &DataBatch, c: usize) -> Result<f64> {
    let labels = test
        .labels()
        .ok_or_else(|| Error::InvalidArgument("test batch has no labels".into()))?;
    let f = spec.informative[c];
    let target = cluster_label(c);
    let cut = spec.shift / 2.0;
    let (mut normal_n, mut normal_err, mut anom_n, mut anom_err) = (0usize, 0usize, 0usize, 0usize);
    for (i, label) in labels.iter().enumerate() {
        let x = test.value(i, f);
        if label == NORMAL_LABEL {
            normal_n += 1;
            normal_err += usize::from(x > cut);
        } else if *label == target {
            anom_n += 1;
            anom_err += usize::from(x <= cut);
        }
    }
    if normal_n == 0 || anom_n == 0 {
        return Err(Error::InvalidArgument(format!("cluster {} or normal class is empty", c + 1)));
    }
    Ok(0.5 * (normal_err as f64 / normal_n as f64 + anom_err as f64 / anom_n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_scale_counts() {
        let spec = SyntheticSpec {
            batch_size: 2000,
            ..SyntheticSpec::default()
        };
        let c = spec.counts().unwrap();
        assert_eq!(c.per_cluster, vec![40, 40]);
        assert_eq!(c.train, 384);
        assert_eq!(c.test(), 1616);
    }

    #[test]
    fn default_spec_has_five_percent_anomalies() {
        let c = SyntheticSpec::default().counts().unwrap();
        let frac = (c.per_cluster.iter().sum::<usize>()) as f64 / c.test() as f64;
        assert!((frac - 0.05).abs() < 1e-3, "{frac}");
        let normals = c.train + c.test_normal;
        assert!((c.train as f64 / normals as f64 - 0.2).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_specs() {
        let dup = SyntheticSpec {
            informative: vec![3, 3],
            ..SyntheticSpec::default()
        };
        assert!(dup.validate().is_err());
        let range = SyntheticSpec {
            informative: vec![3, 10],
            ..SyntheticSpec::default()
        };
        assert!(range.validate().is_err());
        let heavy = SyntheticSpec {
            anomaly_fractions: vec![0.6, 0.5],
            ..SyntheticSpec::default()
        };
        assert!(heavy.validate().is_err());
    }

    #[test]
    fn deterministic_and_labelled() {
        let spec = SyntheticSpec {
            batch_size: 600,
            seed: 9,
            ..SyntheticSpec::default()
        };
        let (tr1, te1) = generate(&spec).unwrap();
        let (tr2, te2) = generate(&spec).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        assert!(tr1.labels().is_none());
        let labels = te1.labels().unwrap();
        let c = spec.counts().unwrap();
        assert_eq!(labels.iter().filter(|l| *l == "cluster_1").count(), c.per_cluster[0]);
        assert_eq!(labels.iter().filter(|l| *l == "cluster_2").count(), c.per_cluster[1]);
        assert_eq!(tr1.len(), c.train);
    }
}
