//! Ranking metrics and multi-seed experiment sweeps.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_method, Method};
use crate::data::DataBatch;
use crate::em::derive_seed;
use crate::error::{Error, Result};
use crate::nullmodel::{train_null, TrainConfig};
use crate::search::{DetectionReport, SearchConfig};
use crate::synthgen::{generate, SyntheticSpec, NORMAL_LABEL};

fn check_permutation(ranked: &[usize], n: usize) -> Result<()> {
    if ranked.len() != n {
        return Err(Error::InvalidArgument(format!("ranking has {} entries for {n} samples", ranked.len())));
    }
    let mut seen = vec![false; n];
    for &i in ranked {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidArgument(format!("ranking entry {i} is out of range or repeated")));
        }
    }
    Ok(())
}

/// Area under the ROC curve swept down a total ranking, anomalies positive.
pub fn roc_auc(ranked: &[usize], positive: &[bool]) -> Result<f64> {
    check_permutation(ranked, positive.len())?;
    let pos = positive.iter().filter(|p| **p).count();
    let neg = positive.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument("ROC AUC needs both positive and negative samples".into()));
    }
    // Each negative contributes a column of height equal to the true
    // positives ranked before it; with no rank ties the trapezoids are rectangles.
    let mut tp = 0u64;
    let mut area = 0u64;
    for &i in ranked {
        if positive[i] {
            tp += 1;
        } else {
            area += tp;
        }
    }
    Ok(area as f64 / (pos as f64 * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Precision {
    pub value: f64,
    /// The ranking was shorter than `k`, so its full length was used.
    pub truncated: bool,
}

/// Fraction of anomalies among the first `k` ranked samples.
pub fn top_k_precision(ranked: &[usize], positive: &[bool], k: usize) -> Precision {
    let truncated = ranked.len() < k;
    let n = k.min(ranked.len());
    if n == 0 {
        return Precision { value: 0.0, truncated };
    }
    let hits = ranked[..n].iter().filter(|&&i| positive[i]).count();
    Precision {
        value: hits as f64 / n as f64,
        truncated,
    }
}

/// Anomaly indicator per label: everything except `normal_label` is positive.
pub fn positive_mask(labels: &[String], normal_label: &str) -> Vec<bool> {
    labels.iter().map(|l| l != normal_label).collect()
}

/// Metrics for one detection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub auc: f64,
    pub top_k_precision: f64,
    pub top_k_truncated: bool,
    /// Anomalous share of the first extracted cluster, when there is one.
    pub first_cluster_purity: Option<f64>,
    pub first_cluster_size: Option<usize>,
}

pub fn evaluate_report(report: &DetectionReport, positive: &[bool], k: usize) -> Result<RunMetrics> {
    let auc = roc_auc(&report.ranked_samples, positive)?;
    let p = top_k_precision(&report.ranked_samples, positive, k);
    let first = report.clusters.first();
    Ok(RunMetrics {
        auc,
        top_k_precision: p.value,
        top_k_truncated: p.truncated,
        first_cluster_purity: first.map(|c| {
            c.samples.iter().filter(|&&i| positive[i]).count() as f64 / c.samples.len() as f64
        }),
        first_cluster_size: first.map(|c| c.samples.len()),
    })
}

/// Maps a report's ranked ids onto a labelled batch and evaluates it.
/// The report's id set must equal the batch's id set.
pub fn evaluate_by_ids(report: &DetectionReport, labelled: &DataBatch, normal_label: &str, k: usize) -> Result<RunMetrics> {
    let labels = labelled
        .labels()
        .ok_or_else(|| Error::InvalidArgument("label file has no label column".into()))?;
    let index: HashMap<String, usize> = (0..labelled.len()).map(|i| (labelled.sample_id(i), i)).collect();
    if index.len() != labelled.len() {
        return Err(Error::DataQuality("label file repeats a sample id".into()));
    }
    if report.ranked_ids.len() != labelled.len() {
        return Err(Error::InvalidArgument(format!(
            "report ranks {} samples, label file has {}",
            report.ranked_ids.len(),
            labelled.len()
        )));
    }
    let ranked = report
        .ranked_ids
        .iter()
        .map(|id| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("sample id {id:?} is missing from the label file")))
        })
        .collect::<Result<Vec<usize>>>()?;
    // Cluster members are row indices of the batch the report was run on.
    let row_to_label: HashMap<usize, usize> = report.ranked_samples.iter().copied().zip(ranked.iter().copied()).collect();
    let clusters = report
        .clusters
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.samples = c
                .samples
                .iter()
                .map(|i| {
                    row_to_label
                        .get(i)
                        .copied()
                        .ok_or_else(|| Error::InvalidArgument(format!("cluster member {i} is not ranked")))
                })
                .collect::<Result<_>>()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let remapped = DetectionReport {
        method: report.method.clone(),
        clusters,
        ranked_samples: ranked,
        ranked_ids: report.ranked_ids.clone(),
    };
    evaluate_report(&remapped, &positive_mask(labels, normal_label), k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub synthetic: SyntheticSpec,
    pub methods: Vec<Method>,
    pub k_max: Vec<usize>,
    pub seeds: Vec<u64>,
    pub search: SearchConfig,
    pub train: TrainConfig,
    pub top_k: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticSpec::default(),
            methods: Method::ALL.to_vec(),
            k_max: (1..=6).collect(),
            seeds: (0..10).collect(),
            search: SearchConfig::default(),
            train: TrainConfig::default(),
            top_k: 100,
        }
    }
}

/// One `(method, K_max, seed)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: Method,
    pub k_max: usize,
    pub seed: u64,
    pub metrics: Option<RunMetrics>,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub k_max: usize,
    /// Seeds that produced metrics.
    pub seeds: usize,
    pub failures: usize,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub precision_mean: f64,
    pub precision_std: f64,
    pub purity_mean: Option<f64>,
    pub purity_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: SweepConfig,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_seed(config: &SweepConfig, seed: u64) -> Vec<CellResult> {
    let spec = SyntheticSpec {
        seed: derive_seed(seed, &[0x5eed]),
        ..config.synthetic.clone()
    };
    let mut train_cfg = config.train.clone();
    train_cfg.em.seed = seed;
    let mut cells = Vec::new();
    let fail_all = |cells: &mut Vec<CellResult>, msg: String| {
        for &method in &config.methods {
            for &k in &config.k_max {
                cells.push(CellResult {
                    method,
                    k_max: k,
                    seed,
                    metrics: None,
                    error: Some(msg.clone()),
                    seconds: 0.0,
                });
            }
        }
    };
    let prepared = generate(&spec).and_then(|(train, test)| {
        let model = train_null(&train, &train_cfg)?;
        Ok((train, test, model))
    });
    let (train, test, model) = match prepared {
        Ok(p) => p,
        Err(e) => {
            log::warn!("seed {seed}: setup failed: {e}");
            fail_all(&mut cells, e.to_string());
            return cells;
        }
    };
    let positive = positive_mask(test.labels().expect("synthetic test batch is labelled"), NORMAL_LABEL);

    for &method in &config.methods {
        let mut shared: Option<(std::result::Result<RunMetrics, String>, f64)> = None;
        for &k in &config.k_max {
            let (res, seconds) = if let Some((r, s)) = shared.as_ref().filter(|_| !method.uses_k_max()) {
                (r.clone(), *s)
            } else {
                let start = Instant::now();
                let search = SearchConfig {
                    k_max: k,
                    ..config.search.clone()
                };
                let res = run_method(method, &model, Some(&train), &test, &search, &train_cfg.em)
                    .and_then(|r| evaluate_report(&r, &positive, config.top_k))
                    .map_err(|e| e.to_string());
                let s = start.elapsed().as_secs_f64();
                if !method.uses_k_max() {
                    shared = Some((res.clone(), s));
                }
                (res, s)
            };
            match &res {
                Ok(m) => log::info!("seed {seed} {method} K={k}: AUC {:.4}", m.auc),
                Err(e) => log::warn!("seed {seed} {method} K={k}: {e}"),
            }
            cells.push(CellResult {
                method,
                k_max: k,
                seed,
                error: res.as_ref().err().cloned(),
                metrics: res.ok(),
                seconds,
            });
        }
    }
    cells
}

/// For each seed: regenerate data, retrain the null, run every method at
/// every `K_max`, and score. Failures are recorded per cell.
pub fn run_sweep(config: &SweepConfig) -> ExperimentResult {
    let mut cells: Vec<CellResult> = config.seeds.par_iter().flat_map_iter(|&s| run_seed(config, s)).collect();
    cells.sort_by_key(|c| (c.method, c.k_max, c.seed));
    let aggregates = aggregate(&cells);
    ExperimentResult {
        config: config.clone(),
        cells,
        aggregates,
    }
}

pub fn aggregate(cells: &[CellResult]) -> Vec<Aggregate> {
    let mut keys: Vec<(Method, usize)> = cells.iter().map(|c| (c.method, c.k_max)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(method, k_max)| {
            let group: Vec<&CellResult> = cells.iter().filter(|c| c.method == method && c.k_max == k_max).collect();
            let ok: Vec<&RunMetrics> = group.iter().filter_map(|c| c.metrics.as_ref()).collect();
            let auc: Vec<f64> = ok.iter().map(|m| m.auc).collect();
            let prec: Vec<f64> = ok.iter().map(|m| m.top_k_precision).collect();
            let purity: Vec<f64> = ok.iter().filter_map(|m| m.first_cluster_purity).collect();
            let (auc_mean, auc_std) = mean_std(&auc);
            let (precision_mean, precision_std) = mean_std(&prec);
            let (pm, ps) = mean_std(&purity);
            Aggregate {
                method,
                k_max,
                seeds: ok.len(),
                failures: group.len() - ok.len(),
                auc_mean,
                auc_std,
                precision_mean,
                precision_std,
                purity_mean: (!purity.is_empty()).then_some(pm),
                purity_std: (!purity.is_empty()).then_some(ps),
            }
        })
        .collect()
}

impl ExperimentResult {
    pub fn aggregate_for(&self, method: Method, k_max: usize) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.method == method && a.k_max == k_max)
    }

    /// Per-seed rows followed by one aggregate row per `(method, K_max)`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method", "k_max", "seed", "auc", "auc_std", "top_k_precision", "precision_std",
            "first_cluster_purity", "first_cluster_size", "error",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            let m = c.metrics.as_ref();
            w.write_record([
                c.method.name().to_string(),
                c.k_max.to_string(),
                c.seed.to_string(),
                opt(m.map(|m| m.auc)),
                String::new(),
                opt(m.map(|m| m.top_k_precision)),
                String::new(),
                opt(m.and_then(|m| m.first_cluster_purity)),
                m.and_then(|m| m.first_cluster_size).map(|s| s.to_string()).unwrap_or_default(),
                c.error.clone().unwrap_or_default(),
            ])?;
        }
        for a in &self.aggregates {
            w.write_record([
                a.method.name().to_string(),
                a.k_max.to_string(),
                "mean".to_string(),
                a.auc_mean.to_string(),
                a.auc_std.to_string(),
                a.precision_mean.to_string(),
                a.precision_std.to_string(),
                opt(a.purity_mean),
                String::new(),
                if a.failures > 0 { format!("{} failed", a.failures) } else { String::new() },
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io {
            path: "<csv buffer>".into(),
            source: e.into_error(),
        })?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Gnuplot-style blocks of `k_max auc_mean auc_std`, one block per method.
    pub fn to_dat(&self) -> String {
        let mut out = String::new();
        let mut methods: Vec<Method> = self.aggregates.iter().map(|a| a.method).collect();
        methods.dedup();
        for m in methods {
            let _ = writeln!(out, "# {m}\n# k_max auc_mean auc_std precision_mean precision_std");
            for a in self.aggregates.iter().filter(|a| a.method == m) {
                let _ = writeln!(
                    out,
                    "{} {:.6} {:.6} {:.6} {:.6}",
                    a.k_max, a.auc_mean, a.auc_std, a.precision_mean, a.precision_std
                );
            }
            out.push_str("\n\n");
        }
        out
    }

    /// Writes `sweep.csv`, `sweep.json` and `auc_vs_kmax.dat` into `dir`.
    pub fn write_all(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
        };
        write("sweep.csv", self.to_csv()?)?;
        write("sweep.json", serde_json::to_string_pretty(self)?)?;
        write("auc_vs_kmax.dat", self.to_dat())
    }
}
