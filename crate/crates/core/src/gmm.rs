//! Univariate and bivariate Gaussian mixtures: fitting, densities,
//! posteriors, exact marginalization and sampling.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::em::{self, CovarianceKind, EmConfig, RawMixture};
use crate::error::{Error, Result};
use crate::normal::std_normal_cdf;

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// One-dimensional Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateGmm {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Two-dimensional Gaussian mixture with full covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateGmm {
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 2]>,
    pub covariances: Vec<[[f64; 2]; 2]>,
}

/// A fitted model together with what BIC saw while selecting it.
#[derive(Debug, Clone)]
pub struct Fitted<M> {
    pub model: M,
    pub log_likelihood: f64,
    pub bic: f64,
    /// Set when a column had zero variance and the floor stood in for it.
    pub degenerate: bool,
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidArgument("mixture needs at least one component".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("mixture weights must be positive".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidArgument(format!("mixture weights sum to {total}")));
    }
    Ok(())
}

fn pick_component<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.random();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Normalizes log-terms into posterior probabilities; `fallback` picks the
/// component used when every term is `-inf` or NaN.
fn normalize_log_terms(terms: &[f64], fallback: impl FnOnce() -> usize) -> Vec<f64> {
    let lse = em::log_sum_exp(terms);
    let mut out = vec![0.0; terms.len()];
    if !lse.is_finite() {
        out[fallback()] = 1.0;
        return out;
    }
    for (o, t) in out.iter_mut().zip(terms) {
        *o = (t - lse).exp();
    }
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|o| *o /= s);
    out
}

impl UnivariateGmm {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let m = Self {
            weights,
            means,
            variances,
        };
        m.validate()?;
        Ok(m)
    }

    /// Single Gaussian.
    pub fn normal(mean: f64, variance: f64) -> Self {
        Self {
            weights: vec![1.0],
            means: vec![mean],
            variances: vec![variance],
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_weights(&self.weights)?;
        if self.means.len() != self.weights.len() || self.variances.len() != self.weights.len() {
            return Err(Error::InvalidArgument("component arrays differ in length".into()));
        }
        if self.variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("invalid univariate component".into()));
        }
        Ok(())
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    fn component_log_pdf(&self, l: usize, x: f64) -> f64 {
        let v = self.variances[l];
        let d = x - self.means[l];
        -0.5 * (2.0 * PI * v).ln() - d * d / (2.0 * v)
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        em::log_sum_exp_iter((0..self.n_components()).map(|l| self.weights[l].ln() + self.component_log_pdf(l, x)))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        (0..self.n_components())
            .map(|l| self.weights[l] * std_normal_cdf((x - self.means[l]) / self.variances[l].sqrt()))
            .sum()
    }

    /// Posterior probability of each component having generated `x`.
    pub fn responsibilities(&self, x: f64) -> Vec<f64> {
        let terms: Vec<f64> = (0..self.n_components())
            .map(|l| self.weights[l].ln() + self.component_log_pdf(l, x))
            .collect();
        normalize_log_terms(&terms, || {
            let z = |l: usize| ((x - self.means[l]) / self.variances[l].sqrt()).abs();
            (0..self.n_components())
                .min_by(|&a, &b| z(a).total_cmp(&z(b)))
                .unwrap_or(0)
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let l = pick_component(&self.weights, rng);
        let z: f64 = StandardNormal.sample(rng);
        self.means[l] + self.variances[l].sqrt() * z
    }

    fn from_raw(raw: RawMixture) -> Self {
        Self {
            weights: raw.weights,
            means: raw.means.into_iter().map(|m| m[0]).collect(),
            variances: raw.covariances.into_iter().map(|c| c[0]).collect(),
        }
    }
}

/// Precomputed inverse covariance for fast 2-D density evaluation.
#[derive(Debug, Clone, Copy)]
struct Prepared2 {
    mean: [f64; 2],
    inv: [f64; 3],
    log_norm: f64,
}

impl Prepared2 {
    fn new(mean: [f64; 2], c: [[f64; 2]; 2]) -> Self {
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        Self {
            mean,
            inv: [c[1][1] / det, -c[0][1] / det, c[0][0] / det],
            log_norm: -(2.0 * PI).ln() - 0.5 * det.ln(),
        }
    }

    fn mahalanobis2(&self, x: [f64; 2]) -> f64 {
        let a = x[0] - self.mean[0];
        let b = x[1] - self.mean[1];
        a * a * self.inv[0] + 2.0 * a * b * self.inv[1] + b * b * self.inv[2]
    }

    fn log_pdf(&self, x: [f64; 2]) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis2(x)
    }
}

impl BivariateGmm {
    pub fn new(weights: Vec<f64>, means: Vec<[f64; 2]>, covariances: Vec<[[f64; 2]; 2]>) -> Result<Self> {
        let m = Self {
            weights,
            means,
            covariances,
        };
        m.validate()?;
        Ok(m)
    }

    /// Single bivariate Gaussian with the given standard deviations and correlation.
    pub fn normal(mean: [f64; 2], sd: [f64; 2], rho: f64) -> Self {
        let c = rho * sd[0] * sd[1];
        Self {
            weights: vec![1.0],
            means: vec![mean],
            covariances: vec![[[sd[0] * sd[0], c], [c, sd[1] * sd[1]]]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_weights(&self.weights)?;
        if self.means.len() != self.weights.len() || self.covariances.len() != self.weights.len() {
            return Err(Error::InvalidArgument("component arrays differ in length".into()));
        }
        for c in &self.covariances {
            let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
            if !(c[0][0] > 0.0 && c[1][1] > 0.0 && det > 0.0) || c[0][1] != c[1][0] {
                return Err(Error::InvalidArgument("covariance is not symmetric positive definite".into()));
            }
        }
        if self.means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("non-finite component mean".into()));
        }
        Ok(())
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    /// Correlation coefficient of component `l`.
    pub fn correlation(&self, l: usize) -> f64 {
        let c = &self.covariances[l];
        c[0][1] / (c[0][0] * c[1][1]).sqrt()
    }

    fn prepared(&self) -> Vec<Prepared2> {
        self.means
            .iter()
            .zip(&self.covariances)
            .map(|(m, c)| Prepared2::new(*m, *c))
            .collect()
    }

    fn log_terms(&self, prepared: &[Prepared2], x: [f64; 2]) -> Vec<f64> {
        prepared
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w.ln() + p.log_pdf(x))
            .collect()
    }

    pub fn log_pdf(&self, x: [f64; 2]) -> f64 {
        em::log_sum_exp_iter(
            self.means
                .iter()
                .zip(&self.covariances)
                .zip(&self.weights)
                .map(|((m, c), w)| w.ln() + Prepared2::new(*m, *c).log_pdf(x)),
        )
    }

    pub fn responsibilities(&self, x: [f64; 2]) -> Vec<f64> {
        let prepared = self.prepared();
        let terms = self.log_terms(&prepared, x);
        normalize_log_terms(&terms, || {
            (0..self.n_components())
                .min_by(|&a, &b| prepared[a].mahalanobis2(x).total_cmp(&prepared[b].mahalanobis2(x)))
                .unwrap_or(0)
        })
    }

    /// Exact marginal of one coordinate (`keep` is 0 or 1).
    pub fn marginalize(&self, keep: usize) -> Result<UnivariateGmm> {
        if keep > 1 {
            return Err(Error::InvalidArgument(format!("slot {keep} is not 0 or 1")));
        }
        Ok(UnivariateGmm {
            weights: self.weights.clone(),
            means: self.means.iter().map(|m| m[keep]).collect(),
            variances: self.covariances.iter().map(|c| c[keep][keep]).collect(),
        })
    }

    /// The same joint law with the two coordinates exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            weights: self.weights.clone(),
            means: self.means.iter().map(|m| [m[1], m[0]]).collect(),
            covariances: self
                .covariances
                .iter()
                .map(|c| [[c[1][1], c[1][0]], [c[0][1], c[0][0]]])
                .collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let l = pick_component(&self.weights, rng);
        let c = &self.covariances[l];
        let l11 = c[0][0].sqrt();
        let l21 = c[1][0] / l11;
        let l22 = (c[1][1] - l21 * l21).max(0.0).sqrt();
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        [self.means[l][0] + l11 * z1, self.means[l][1] + l21 * z1 + l22 * z2]
    }

    /// Monte-Carlo mutual information in nats, clamped at zero.
    pub fn mutual_information<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> f64 {
        let prepared = self.prepared();
        let m0 = self.marginalize(0).expect("slot 0");
        let m1 = self.marginalize(1).expect("slot 1");
        let log_w: Vec<f64> = self.weights.iter().map(|w| w.ln()).collect();
        let mut acc = 0.0;
        for _ in 0..samples {
            let x = self.sample(rng);
            let joint = em::log_sum_exp_iter(prepared.iter().zip(&log_w).map(|(p, lw)| lw + p.log_pdf(x)));
            acc += joint - m0.log_pdf(x[0]) - m1.log_pdf(x[1]);
        }
        (acc / samples as f64).max(0.0)
    }

    fn from_raw(raw: RawMixture) -> Self {
        Self {
            weights: raw.weights,
            means: raw.means.into_iter().map(|m| [m[0], m[1]]).collect(),
            covariances: raw
                .covariances
                .into_iter()
                .map(|c| {
                    let off = 0.5 * (c[1] + c[2]);
                    [[c[0], off], [off, c[3]]]
                })
                .collect(),
        }
    }
}

/// EM-plus-BIC fit of a univariate mixture.
pub fn fit_univariate(column: &[f64], config: &EmConfig) -> Result<Fitted<UnivariateGmm>> {
    let sel = em::fit_bic(column, 1, CovarianceKind::Diagonal, config)?;
    Ok(Fitted {
        model: UnivariateGmm::from_raw(sel.mixture),
        log_likelihood: sel.log_likelihood,
        bic: sel.bic,
        degenerate: sel.degenerate,
    })
}

/// EM-plus-BIC fit of a bivariate mixture with diagonal loading.
pub fn fit_bivariate(points: &[[f64; 2]], config: &EmConfig) -> Result<Fitted<BivariateGmm>> {
    let flat: Vec<f64> = points.iter().flatten().copied().collect();
    let sel = em::fit_bic(&flat, 2, CovarianceKind::Full, config)?;
    Ok(Fitted {
        model: BivariateGmm::from_raw(sel.mixture),
        log_likelihood: sel.log_likelihood,
        bic: sel.bic,
        degenerate: sel.degenerate,
    })
}

/// Gaussian mixture over the full feature vector.
#[derive(Debug, Clone)]
pub struct MultivariateGmm {
    raw: RawMixture,
    kind: CovarianceKind,
    prepared: Vec<em::PreparedComponent>,
    log_weights: Vec<f64>,
}

impl MultivariateGmm {
    pub fn fit(data: &[f64], dim: usize, kind: CovarianceKind, config: &EmConfig) -> Result<Fitted<Self>> {
        let sel = em::fit_bic(data, dim, kind, config)?;
        let prepared = em::prepare(&sel.mixture)?;
        let log_weights = sel.mixture.weights.iter().map(|w| w.ln()).collect();
        Ok(Fitted {
            model: Self {
                raw: sel.mixture,
                kind,
                prepared,
                log_weights,
            },
            log_likelihood: sel.log_likelihood,
            bic: sel.bic,
            degenerate: sel.degenerate,
        })
    }

    pub fn dim(&self) -> usize {
        self.raw.dim
    }

    pub fn kind(&self) -> CovarianceKind {
        self.kind
    }

    pub fn n_components(&self) -> usize {
        self.raw.weights.len()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.raw.means
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .prepared
            .iter()
            .zip(&self.log_weights)
            .map(|(c, lw)| lw + c.log_pdf(x))
            .collect();
        em::log_sum_exp(&terms)
    }
}
