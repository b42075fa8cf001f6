use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gadscan::baselines::Method;
use gadscan::flowfeat::Direction;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "gadscan", version, about = "Group anomaly detection with Gaussian-mixture nulls and dependence trees")]
pub struct Cli {
    /// Global seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Turn a JSONL flow file into a 2N-column CSV.
    Featurize(FeaturizeArgs),
    /// Fit the null model on a CSV of normal samples.
    Train(TrainArgs),
    /// Run a detector on a test CSV.
    Detect(DetectArgs),
    /// Generate a synthetic train/test pair.
    Synth(SynthArgs),
    /// Score detection reports against labels.
    Eval(EvalArgs),
    /// Multi-seed sweep over methods and K_max on synthetic data.
    Sweep(SweepArgs),
    /// Re-run the configuration stored in a manifest or config file.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FirstDir {
    Cs,
    Sc,
}

impl From<FirstDir> for Direction {
    fn from(d: FirstDir) -> Self {
        match d {
            FirstDir::Cs => Direction::Cs,
            FirstDir::Sc => Direction::Sc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Packets per flow; the CSV gets 2N feature columns.
    #[arg(long = "packets", short = 'n', default_value_t = 10)]
    pub packets: usize,
    /// Direction of the first slot.
    #[arg(long, value_enum, default_value_t = FirstDir::Cs)]
    pub first: FirstDir,
    /// Fail on the first malformed line instead of skipping it.
    #[arg(long)]
    pub strict: bool,
}

/// EM and MI settings shared by every command that fits a null.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Largest mixture order tried by BIC.
    #[arg(long, default_value_t = 10)]
    pub max_components: usize,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    /// Monte-Carlo draws per pairwise mutual information.
    #[arg(long, default_value_t = 1_000_000)]
    pub mi_samples: usize,
    /// Use 1e5 MI draws.
    #[arg(long)]
    pub fast: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 6)]
    pub k_max: usize,
    #[arg(long, default_value_t = 500)]
    pub beam_width: usize,
    /// Stop after this many clusters.
    #[arg(long)]
    pub max_clusters: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub min_cluster_size: usize,
    /// Stop once the best log score rises above this value.
    #[arg(long)]
    pub score_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = Method::Proposed)]
    pub method: Method,
    /// Training CSV; required by the gmm baseline.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// JSON spec; missing fields take the default design.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overrides the spec's total sample count.
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// One or more detection reports.
    #[arg(long = "report", required = true, num_args = 1..)]
    pub reports: Vec<PathBuf>,
    /// Labelled CSV the reports were run on.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub top_k: usize,
    #[arg(long, default_value = "normal")]
    pub normal_label: String,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = Method::ALL.to_vec())]
    pub methods: Vec<Method>,
    #[arg(long = "k-max", value_delimiter = ',', default_values_t = vec![1, 2, 3, 4, 5, 6])]
    pub k_max: Vec<usize>,
    /// Number of seeds, counted up from `--seed`.
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, default_value_t = 500)]
    pub beam_width: usize,
    #[arg(long, default_value_t = 100)]
    pub top_k: usize,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub config: PathBuf,
}

/// Everything needed to repeat one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    #[serde(flatten)]
    pub command: Command,
}

impl From<Cli> for RunConfig {
    fn from(cli: Cli) -> Self {
        Self {
            seed: cli.seed,
            threads: cli.threads,
            command: cli.command,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_round_trips_through_json() {
        let cli = Cli::parse_from([
            "gadscan", "--seed", "9", "detect", "--model", "m.json", "--input", "t.csv", "--output", "r.json", "--method",
            "single_bn", "--k-max", "3",
        ]);
        let cfg = RunConfig::from(cli);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        match back.command {
            Command::Detect(d) => {
                assert_eq!(d.method, Method::SingleBn);
                assert_eq!(d.search.k_max, 3);
                assert_eq!(d.search.beam_width, 500);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn documented_defaults() {
        let cli = Cli::parse_from(["gadscan", "sweep", "--out-dir", "o"]);
        let Command::Sweep(s) = cli.command else { panic!() };
        assert_eq!(s.seeds, 10);
        assert_eq!(s.k_max, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(s.fit.mi_samples, 1_000_000);
        assert_eq!(s.methods, Method::ALL.to_vec());
    }
}
