//! Group anomaly detection over low-order Gaussian-mixture nulls.
//!
//! A null model of univariate and bivariate mixtures is fit to normal data.
//! Test samples get mixture p-values on single features and feature pairs,
//! which a per-cluster dependence tree combines into joint p-values. A beam
//! search over feature subsets then extracts the most significant
//! (sample subset, feature subset) clusters one at a time.

pub mod baselines;
pub mod data;
pub mod deptree;
pub mod em;
pub mod error;
pub mod evalkit;
pub mod flowfeat;
pub mod gmm;
pub mod normal;
pub mod nullmodel;
pub mod pvalue;
pub mod scoring;
pub mod search;
pub mod synthgen;

pub use baselines::{run_method, Method};
pub use data::DataBatch;
pub use deptree::{build_tree, joint_pvalue, DependenceTree};
pub use em::EmConfig;
pub use error::{Error, Result};
pub use gmm::{BivariateGmm, UnivariateGmm};
pub use nullmodel::{train_null, NullModel, TrainConfig};
pub use pvalue::{conditional_pvalue, pair_pvalue, singleton_pvalue, P_MIN};
pub use scoring::{log_score, optimal_sample_subset};
pub use search::{detect_all, detect_one_cluster, DetectionReport, JointModel, SearchConfig};
pub use synthgen::{generate, SyntheticSpec};
