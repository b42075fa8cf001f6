use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gadscan::baselines::{run_method, Method};
use gadscan::data::DataBatch;
use gadscan::em::EmConfig;
use gadscan::evalkit::{evaluate_by_ids, run_sweep, SweepConfig};
use gadscan::flowfeat::{featurize_with, ingest_flows, to_batch, FeaturizeOptions, Strictness};
use gadscan::nullmodel::{train_null, NullModel, TrainConfig};
use gadscan::search::{DetectionReport, SearchConfig};
use gadscan::synthgen::{write_synthetic, SyntheticSpec};
use log::{info, warn};

use crate::args::*;
use crate::manifest::Manifest;

const FAST_MI_SAMPLES: usize = 100_000;

pub fn execute(cfg: &RunConfig) -> Result<()> {
    match &cfg.command {
        Command::Featurize(a) => featurize(cfg, a),
        Command::Train(a) => train(cfg, a),
        Command::Detect(a) => detect(cfg, a),
        Command::Synth(a) => synth(cfg, a),
        Command::Eval(a) => eval(cfg, a),
        Command::Sweep(a) => sweep(cfg, a),
        Command::Replay(a) => replay(cfg, a),
    }
}

fn train_config(fit: &FitArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        em: EmConfig {
            max_components: fit.max_components,
            restarts: fit.restarts,
            seed,
            ..EmConfig::default()
        },
        mi_samples: if fit.fast { FAST_MI_SAMPLES } else { fit.mi_samples },
    }
}

fn search_config(s: &SearchArgs) -> SearchConfig {
    SearchConfig {
        k_max: s.k_max,
        beam_width: s.beam_width,
        max_clusters: s.max_clusters,
        min_cluster_size: s.min_cluster_size,
        score_threshold: s.score_threshold,
    }
}

fn load_spec(path: Option<&Path>) -> Result<SyntheticSpec> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(serde_json::from_str(&text).map_err(gadscan::Error::from)?)
        }
        None => Ok(SyntheticSpec::default()),
    }
}

fn read_batch(path: &Path) -> Result<DataBatch> {
    Ok(DataBatch::read_csv_path(path)?)
}

fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn featurize(cfg: &RunConfig, a: &FeaturizeArgs) -> Result<()> {
    if a.packets == 0 {
        bail!(gadscan::Error::InvalidArgument("--packets must be positive".into()));
    }
    let strictness = if a.strict { Strictness::Strict } else { Strictness::Lenient };
    let report = ingest_flows(&a.input, strictness)?;
    for (line, reason) in &report.rejected {
        warn!("line {line}: {reason}");
    }
    let opts = FeaturizeOptions {
        packets: a.packets,
        first: a.first.into(),
    };
    let vectors: Vec<_> = report.flows.iter().map(|f| featurize_with(f, &opts)).collect();
    let empty = vectors.iter().filter(|v| v.empty).count();
    if empty > 0 {
        warn!("{empty} flows have no packets and featurize to all zeros");
    }
    to_batch(&vectors, a.packets)?.write_csv_path(&a.output)?;
    println!(
        "featurized {} flows into {} columns ({} lines rejected)",
        vectors.len(),
        2 * a.packets,
        report.rejected.len()
    );
    let mut m = Manifest::new(cfg);
    m.input("input", &a.input)?;
    m.output("output", &a.output)?;
    m.write(manifest_path(&a.output))
}

fn train(cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    let batch = read_batch(&a.input)?;
    let tc = train_config(&a.fit, cfg.seed);
    info!("training on {} rows x {} features", batch.len(), batch.dim());
    let model = train_null(&batch, &tc)?;
    model.save(&a.output)?;

    let names = batch.feature_names();
    for j in 0..model.dim() {
        println!("feature {:>3} {:<12} L={}", j, names[j], model.univariate(j).n_components());
    }
    let mut mi: Vec<(f64, usize, usize)> = model.pairs().iter().map(|p| (model.mi(p.j, p.k), p.j, p.k)).collect();
    mi.sort_by(|x, y| y.0.total_cmp(&x.0));
    if !mi.is_empty() {
        let mean = mi.iter().map(|t| t.0).sum::<f64>() / mi.len() as f64;
        println!("pairwise MI: {} pairs, mean {mean:.4}, max {:.4} ({}, {})", mi.len(), mi[0].0, mi[0].1, mi[0].2);
    }
    let mut m = Manifest::new(cfg);
    m.input("input", &a.input)?;
    m.model(&a.output)?;
    m.write(manifest_path(&a.output))
}

fn detect(cfg: &RunConfig, a: &DetectArgs) -> Result<()> {
    let model = NullModel::load(&a.model)?;
    let test = read_batch(&a.input)?;
    let train = match (&a.train, a.method) {
        (Some(p), _) => Some(read_batch(p)?),
        (None, Method::Gmm) => bail!(gadscan::Error::InvalidArgument("method gmm needs --train".into())),
        (None, _) => None,
    };
    let em = EmConfig {
        seed: cfg.seed,
        ..EmConfig::default()
    };
    let report = run_method(a.method, &model, train.as_ref(), &test, &search_config(&a.search), &em)?;
    fs::write(&a.output, report.to_json()?).with_context(|| format!("writing {}", a.output.display()))?;
    println!("{}: {} clusters over {} samples", report.method, report.clusters.len(), test.len());
    for (c, cl) in report.clusters.iter().take(10).enumerate() {
        println!(
            "cluster {:>3}: {} samples, features {:?}, log score {:.3}",
            c + 1,
            cl.samples.len(),
            cl.features,
            cl.log_score
        );
    }
    let mut m = Manifest::new(cfg);
    m.model(&a.model)?;
    m.input("input", &a.input)?;
    if let Some(t) = &a.train {
        m.input("train", t)?;
    }
    m.output("output", &a.output)?;
    m.write(manifest_path(&a.output))
}

fn synth(cfg: &RunConfig, a: &SynthArgs) -> Result<()> {
    let mut spec = load_spec(a.spec.as_deref())?;
    spec.seed = cfg.seed;
    if let Some(n) = a.batch_size {
        spec.batch_size = n;
    }
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let (train, test) = write_synthetic(&spec, &a.out_dir)?;
    println!("wrote {} training and {} test samples to {}", train.len(), test.len(), a.out_dir.display());
    fs::write(a.out_dir.join("spec.json"), serde_json::to_string_pretty(&spec)?)?;
    let mut m = Manifest::new(cfg);
    m.output("train", &a.out_dir.join("train.csv"))?;
    m.output("test", &a.out_dir.join("test.csv"))?;
    m.write(a.out_dir.join("manifest.json"))
}

fn eval(cfg: &RunConfig, a: &EvalArgs) -> Result<()> {
    let labelled = read_batch(&a.labels)?;
    let mut wtr = csv::Writer::from_path(&a.output).with_context(|| format!("writing {}", a.output.display()))?;
    wtr.write_record(["report", "method", "auc", "top_k_precision", "top_k_truncated", "first_cluster_purity", "first_cluster_size"])?;
    let mut m = Manifest::new(cfg);
    m.input("labels", &a.labels)?;
    for path in &a.reports {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let report = DetectionReport::from_json(&text)?;
        let metrics = evaluate_by_ids(&report, &labelled, &a.normal_label, a.top_k)?;
        let name = path.display().to_string();
        println!("{name} {}: AUC {:.4}, top-{} precision {:.4}", report.method, metrics.auc, a.top_k, metrics.top_k_precision);
        wtr.write_record([
            name,
            report.method.clone(),
            metrics.auc.to_string(),
            metrics.top_k_precision.to_string(),
            metrics.top_k_truncated.to_string(),
            metrics.first_cluster_purity.map(|v| v.to_string()).unwrap_or_default(),
            metrics.first_cluster_size.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
        m.input(&format!("report:{}", path.display()), path)?;
    }
    wtr.flush()?;
    m.output("output", &a.output)?;
    m.write(manifest_path(&a.output))
}

fn sweep(cfg: &RunConfig, a: &SweepArgs) -> Result<()> {
    let mut synthetic = load_spec(a.spec.as_deref())?;
    if let Some(n) = a.batch_size {
        synthetic.batch_size = n;
    }
    let config = SweepConfig {
        synthetic,
        methods: a.methods.clone(),
        k_max: a.k_max.clone(),
        seeds: (cfg.seed..cfg.seed + a.seeds as u64).collect(),
        search: SearchConfig {
            beam_width: a.beam_width,
            ..SearchConfig::default()
        },
        train: train_config(&a.fit, cfg.seed),
        top_k: a.top_k,
    };
    let res = run_sweep(&config);
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    res.write_all(&a.out_dir)?;
    for g in &res.aggregates {
        println!(
            "{:<13} K={} AUC {:.4} +- {:.4}  top-{} {:.4}  ({} seeds, {} failed)",
            g.method.name(),
            g.k_max,
            g.auc_mean,
            g.auc_std,
            a.top_k,
            g.precision_mean,
            g.seeds,
            g.failures
        );
    }
    let failed = res.cells.iter().filter(|c| c.error.is_some()).count();
    if failed > 0 {
        warn!("{failed} of {} runs failed; see sweep.json", res.cells.len());
    }
    let mut m = Manifest::new(cfg);
    for f in ["sweep.csv", "sweep.json", "auc_vs_kmax.dat"] {
        m.output(f, &a.out_dir.join(f))?;
    }
    m.write(a.out_dir.join("manifest.json"))
}

fn replay(_cfg: &RunConfig, a: &ReplayArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(gadscan::Error::from)?;
    // Accept a bare config or a manifest wrapping one.
    let inner = value.get("config").cloned().unwrap_or(value);
    let stored: RunConfig = serde_json::from_value(inner).map_err(gadscan::Error::from)?;
    if matches!(stored.command, Command::Replay(_)) {
        bail!(gadscan::Error::InvalidArgument("a replay config cannot replay itself".into()));
    }
    info!("replaying {:?}", stored.command);
    execute(&stored)
}
