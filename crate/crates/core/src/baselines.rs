//! Comparison detectors sharing the search and evaluation interfaces.

use serde::{Deserialize, Serialize};

use crate::data::DataBatch;
use crate::deptree::{build_tree, DependenceTree};
use crate::em::{CovarianceKind, EmConfig};
use crate::error::{Error, Result};
use crate::gmm::MultivariateGmm;
use crate::nullmodel::NullModel;
use crate::pvalue::P_MIN;
use crate::search::{detect_all, DetectionReport, JointModel, SearchConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    GmmLikelihood,
    IndependenceTests,
    SingleBayesNet,
}

impl BaselineKind {
    pub fn tag(self) -> &'static str {
        match self {
            BaselineKind::GmmLikelihood => "gmm_likelihood",
            BaselineKind::IndependenceTests => "independence_tests",
            BaselineKind::SingleBayesNet => "single_bayes_net",
        }
    }
}

/// Which tests the independence baseline multiplies together.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndependenceMode {
    #[default]
    Pairwise,
    Singleton,
}

impl IndependenceMode {
    pub fn joint_model(self) -> JointModel {
        match self {
            IndependenceMode::Pairwise => JointModel::IndependentPairs,
            IndependenceMode::Singleton => JointModel::IndependentSingles,
        }
    }
}

/// Joint p-value of one sample treating every test in `subset` as independent.
pub fn independence_score(model: &NullModel, subset: &[usize], x: &[f64], mode: IndependenceMode) -> f64 {
    let fact = mode.joint_model().factorization(model, subset);
    fact.log_joint(
        |f| model.singleton_pvalue(f, x[f]).ln(),
        |a, b| model.pair_pvalue(a, b, x[a], x[b]).ln(),
    )
    .exp()
    .max(P_MIN)
}

/// Maximum mutual-information tree over every feature.
pub fn global_tree(model: &NullModel) -> DependenceTree {
    let all: Vec<usize> = (0..model.dim()).collect();
    build_tree(model, &all)
}

pub fn single_bn_joint(model: &NullModel) -> JointModel {
    JointModel::GlobalTree(global_tree(model))
}

/// Joint p-value of one sample under the global tree restricted to `subset`.
pub fn single_bn_score(model: &NullModel, global: &DependenceTree, subset: &[usize], x: &[f64]) -> f64 {
    let fact = global.induced(subset).factorization();
    fact.log_joint(
        |f| model.singleton_pvalue(f, x[f]).ln(),
        |a, b| model.pair_pvalue(a, b, x[a], x[b]).ln(),
    )
    .exp()
    .max(P_MIN)
}

/// Test rows ranked from least to most likely under one full-dimensional mixture.
#[derive(Debug, Clone)]
pub struct LikelihoodRanking {
    pub ranked: Vec<usize>,
    /// Log-likelihood of each test row, in row order.
    pub log_likelihood: Vec<f64>,
    pub components: usize,
}

pub fn gmm_likelihood_rank(train: &DataBatch, test: &DataBatch, config: &EmConfig) -> Result<LikelihoodRanking> {
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            found: test.dim(),
        });
    }
    let fit = MultivariateGmm::fit(train.values(), train.dim(), CovarianceKind::Diagonal, config)
        .map_err(|e| Error::Numerical(format!("full-feature mixture fit failed: {e}")))?;
    let ll: Vec<f64> = test.rows().map(|x| fit.model.log_pdf(x)).collect();
    let mut ranked: Vec<usize> = (0..test.len()).collect();
    ranked.sort_by(|&a, &b| ll[a].total_cmp(&ll[b]).then(a.cmp(&b)));
    Ok(LikelihoodRanking {
        ranked,
        log_likelihood: ll,
        components: fit.model.n_components(),
    })
}

/// The likelihood ranking in report form (no clusters).
pub fn gmm_report(train: &DataBatch, test: &DataBatch, config: &EmConfig) -> Result<DetectionReport> {
    let r = gmm_likelihood_rank(train, test, config)?;
    Ok(DetectionReport {
        method: BaselineKind::GmmLikelihood.tag().to_string(),
        clusters: vec![],
        ranked_ids: r.ranked.iter().map(|&i| test.sample_id(i)).collect(),
        ranked_samples: r.ranked,
    })
}

/// Every detector exposed through the common interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Cluster-specific dependence trees.
    Proposed,
    Independence,
    SingleBn,
    Gmm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Proposed, Method::Independence, Method::SingleBn, Method::Gmm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Independence => "independence",
            Method::SingleBn => "single_bn",
            Method::Gmm => "gmm",
        }
    }

    /// Whether the result depends on the maximum feature subset size.
    pub fn uses_k_max(self) -> bool {
        self != Method::Gmm
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// Runs one detector on `test`. The likelihood baseline refits on `train`,
/// which is required for it and ignored by the others.
pub fn run_method(
    method: Method,
    model: &NullModel,
    train: Option<&DataBatch>,
    test: &DataBatch,
    search: &SearchConfig,
    em: &EmConfig,
) -> Result<DetectionReport> {
    if test.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: test.dim(),
        });
    }
    let joint = match method {
        Method::Proposed => JointModel::ClusterTree,
        Method::Independence => IndependenceMode::Pairwise.joint_model(),
        Method::SingleBn => single_bn_joint(model),
        Method::Gmm => {
            let train = train
                .ok_or_else(|| Error::InvalidArgument("the gmm baseline needs the training batch".into()))?;
            let mut r = gmm_report(train, test, em)?;
            r.method = method.name().to_string();
            return Ok(r);
        }
    };
    detect_all(model, test, joint, search, method.name())
}
