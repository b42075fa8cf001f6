//! Expectation-maximization for Gaussian mixtures of any small dimension,
//! with BIC model-order selection.
//!
//! Data are passed row-major (`n * d` values). Covariances are stored as
//! row-major `d * d` matrices; the diagonal kind keeps off-diagonals at zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Settings shared by every EM-plus-BIC fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    /// Largest component count tried by BIC.
    pub max_components: usize,
    /// Random restarts per component count; the best log-likelihood wins.
    pub restarts: usize,
    /// Relative log-likelihood change that counts as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Variance floor relative to the per-dimension sample variance.
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_components: 10,
            restarts: 5,
            tolerance: 1e-7,
            max_iterations: 500,
            variance_floor: 1e-6,
            seed: 0,
        }
    }
}

/// Rows needed per component before a component count is attempted.
pub const SAMPLES_PER_COMPONENT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    /// Full covariance with the floor added to the diagonal.
    Full,
    /// Diagonal covariance with each variance clamped at the floor.
    Diagonal,
}

/// Mixture parameters straight out of EM.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMixture {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
}

/// Outcome of a BIC sweep.
#[derive(Debug, Clone)]
pub struct Selection {
    pub mixture: RawMixture,
    pub log_likelihood: f64,
    pub bic: f64,
    /// `(components, best log-likelihood, bic)` for every order tried.
    pub path: Vec<(usize, f64, f64)>,
    pub degenerate: bool,
}

/// A Gaussian component prepared for repeated density evaluation.
#[derive(Debug, Clone)]
pub(crate) struct PreparedComponent {
    mean: Vec<f64>,
    chol: Vec<f64>,
    log_norm: f64,
}

impl PreparedComponent {
    pub(crate) fn new(mean: &[f64], cov: &[f64]) -> Option<Self> {
        let d = mean.len();
        let chol = cholesky(cov, d)?;
        let log_det: f64 = (0..d).map(|i| chol[i * d + i].ln()).sum::<f64>() * 2.0;
        Some(Self {
            mean: mean.to_vec(),
            chol,
            log_norm: -0.5 * (d as f64 * (2.0 * PI).ln() + log_det),
        })
    }

    /// Squared Mahalanobis distance.
    pub(crate) fn mahalanobis2(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        let mut z = [0.0f64; 32];
        let mut heap;
        let z: &mut [f64] = if d <= 32 {
            &mut z[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut acc = 0.0;
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for k in 0..i {
                s -= self.chol[i * d + k] * z[k];
            }
            z[i] = s / self.chol[i * d + i];
            acc += z[i] * z[i];
        }
        acc
    }

    pub(crate) fn log_pdf(&self, x: &[f64]) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis2(x)
    }
}

/// Lower Cholesky factor of a row-major symmetric matrix.
pub(crate) fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Streaming log-sum-exp that needs no buffer.
pub(crate) fn log_sum_exp_iter(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut m = f64::NEG_INFINITY;
    let mut s = 0.0;
    for x in xs {
        if x > m {
            s = if m == f64::NEG_INFINITY { 1.0 } else { s * (m - x).exp() + 1.0 };
            m = x;
        } else if x > f64::NEG_INFINITY {
            s += (x - m).exp();
        }
    }
    if m == f64::NEG_INFINITY || !m.is_finite() {
        return m;
    }
    m + s.ln()
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Free parameters of an `l`-component mixture in `d` dimensions.
pub fn free_parameters(l: usize, d: usize, kind: CovarianceKind) -> usize {
    let cov = match kind {
        CovarianceKind::Full => d * (d + 1) / 2,
        CovarianceKind::Diagonal => d,
    };
    (l - 1) + l * d + l * cov
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic seed derivation for independent streams.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

struct Problem<'a> {
    data: &'a [f64],
    n: usize,
    d: usize,
    kind: CovarianceKind,
    floor: Vec<f64>,
    sample_mean: Vec<f64>,
    sample_cov: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(data: &'a [f64], d: usize, kind: CovarianceKind, rel_floor: f64) -> Self {
        let n = data.len() / d;
        let mut mean = vec![0.0; d];
        for row in data.chunks_exact(d) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = vec![0.0; d * d];
        for row in data.chunks_exact(d) {
            for i in 0..d {
                let di = row[i] - mean[i];
                for j in 0..d {
                    cov[i * d + j] += di * (row[j] - mean[j]);
                }
            }
        }
        cov.iter_mut().for_each(|c| *c /= n as f64);
        let floor = (0..d)
            .map(|i| {
                let v = cov[i * d + i];
                // A constant dimension has no scale of its own; fall back to unit scale.
                rel_floor * if v > 0.0 { v } else { 1.0 }
            })
            .collect();
        Self {
            data,
            n,
            d,
            kind,
            floor,
            sample_mean: mean,
            sample_cov: cov,
        }
    }

    fn regularize(&self, cov: &mut [f64]) {
        let d = self.d;
        match self.kind {
            CovarianceKind::Full => {
                for i in 0..d {
                    cov[i * d + i] += self.floor[i];
                }
            }
            CovarianceKind::Diagonal => {
                for i in 0..d {
                    for j in 0..d {
                        if i != j {
                            cov[i * d + j] = 0.0;
                        }
                    }
                    cov[i * d + i] = cov[i * d + i].max(self.floor[i]);
                }
            }
        }
    }

    fn single_component(&self) -> RawMixture {
        let mut cov = self.sample_cov.clone();
        self.regularize(&mut cov);
        RawMixture {
            dim: self.d,
            weights: vec![1.0],
            means: vec![self.sample_mean.clone()],
            covariances: vec![cov],
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// k-means++ style seeding on variance-scaled coordinates.
    fn seed_means(&self, l: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let d = self.d;
        let scale: Vec<f64> = (0..d).map(|i| 1.0 / self.sample_cov[i * d + i].max(self.floor[i])).collect();
        let dist2 = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).zip(&scale).map(|((x, y), s)| (x - y) * (x - y) * s).sum()
        };
        let mut centers = vec![self.row(rng.random_range(0..self.n)).to_vec()];
        let mut nearest: Vec<f64> = (0..self.n).map(|i| dist2(self.row(i), &centers[0])).collect();
        while centers.len() < l {
            let total: f64 = nearest.iter().sum();
            let idx = if total > 0.0 {
                let mut u = rng.random::<f64>() * total;
                let mut pick = self.n - 1;
                for (i, w) in nearest.iter().enumerate() {
                    if u < *w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                pick
            } else {
                rng.random_range(0..self.n)
            };
            let c = self.row(idx).to_vec();
            for (i, nd) in nearest.iter_mut().enumerate() {
                *nd = nd.min(dist2(self.row(i), &c));
            }
            centers.push(c);
        }
        centers
    }

    fn run_em(&self, l: usize, cfg: &EmConfig, rng: &mut ChaCha8Rng) -> Option<(RawMixture, f64)> {
        let d = self.d;
        let n = self.n;
        let means = self.seed_means(l, rng);
        let mut base = self.sample_cov.clone();
        self.regularize(&mut base);
        let mut mix = RawMixture {
            dim: d,
            weights: vec![1.0 / l as f64; l],
            means,
            covariances: vec![base; l],
        };
        let mut resp = vec![0.0; n * l];
        let mut nk = vec![0.0; l];
        let mut sx = vec![0.0; l * d];
        let mut sxx = vec![0.0; l * d * d];
        let mut prev = f64::NEG_INFINITY;
        let mut ll = f64::NEG_INFINITY;
        for iter in 0..=cfg.max_iterations {
            ll = self.e_step(&mix, &mut resp)?;
            if iter > 0 && (ll - prev).abs() <= cfg.tolerance * prev.abs() {
                break;
            }
            if iter == cfg.max_iterations {
                break;
            }
            prev = ll;

            // M-step: masses and first moments in one pass, centred scatter in a second.
            nk.iter_mut().for_each(|v| *v = 0.0);
            sx.iter_mut().for_each(|v| *v = 0.0);
            for (x, row) in self.data.chunks_exact(d).zip(resp.chunks_exact(l)) {
                for ((acc, s), r) in nk.iter_mut().zip(sx.chunks_exact_mut(d)).zip(row) {
                    *acc += r;
                    for (sv, xv) in s.iter_mut().zip(x) {
                        *sv += r * xv;
                    }
                }
            }
            let live: Vec<bool> = nk.iter().map(|&v| v >= 1e-10).collect();
            for c in 0..l {
                if live[c] {
                    for a in 0..d {
                        mix.means[c][a] = sx[c * d + a] / nk[c];
                    }
                }
            }
            sxx.iter_mut().for_each(|v| *v = 0.0);
            for (x, row) in self.data.chunks_exact(d).zip(resp.chunks_exact(l)) {
                for (c, (s, &r)) in sxx.chunks_exact_mut(d * d).zip(row).enumerate() {
                    let mean = &mix.means[c];
                    for a in 0..d {
                        let da = r * (x[a] - mean[a]);
                        for b in 0..=a {
                            s[a * d + b] += da * (x[b] - mean[b]);
                        }
                    }
                }
            }
            for c in 0..l {
                if !live[c] {
                    // Starved component: keep its location, give it a negligible weight.
                    mix.weights[c] = 1e-300;
                    continue;
                }
                let cov = &mut mix.covariances[c];
                let s = &sxx[c * d * d..(c + 1) * d * d];
                for a in 0..d {
                    for b in 0..=a {
                        cov[a * d + b] = s[a * d + b] / nk[c];
                        cov[b * d + a] = cov[a * d + b];
                    }
                }
                self.regularize(cov);
                mix.weights[c] = nk[c] / n as f64;
            }
            let total: f64 = mix.weights.iter().sum();
            mix.weights.iter_mut().for_each(|w| *w /= total);
        }
        Some((mix, ll))
    }

    /// Fills `resp` with posteriors under `mix` and returns the log-likelihood.
    /// `None` when a covariance is not positive definite or a row has zero density.
    fn e_step(&self, mix: &RawMixture, resp: &mut [f64]) -> Option<f64> {
        let l = mix.weights.len();
        let log_w: Vec<f64> = mix.weights.iter().map(|w| w.ln()).collect();
        // Per-component log density written as `offset - 0.5 * quadratic form`.
        match self.d {
            1 => {
                let prec: Vec<f64> = mix.covariances.iter().map(|c| 1.0 / c[0]).collect();
                let offset: Vec<f64> = (0..l)
                    .map(|c| log_w[c] - 0.5 * ((2.0 * PI).ln() + mix.covariances[c][0].ln()))
                    .collect();
                if prec.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                    return None;
                }
                let mu: Vec<f64> = mix.means.iter().map(|m| m[0]).collect();
                self.normalize_rows(resp, l, |i, c| {
                    let z = self.data[i] - mu[c];
                    offset[c] - 0.5 * prec[c] * z * z
                })
            }
            2 => {
                let mut prec = Vec::with_capacity(l);
                let mut offset = Vec::with_capacity(l);
                for c in 0..l {
                    let s = &mix.covariances[c];
                    let det = s[0] * s[3] - s[1] * s[2];
                    if !(det > 0.0 && s[0] > 0.0 && det.is_finite()) {
                        return None;
                    }
                    prec.push([s[3] / det, -s[1] / det, s[0] / det]);
                    offset.push(log_w[c] - (2.0 * PI).ln() - 0.5 * det.ln());
                }
                let mu: Vec<[f64; 2]> = mix.means.iter().map(|m| [m[0], m[1]]).collect();
                self.normalize_rows(resp, l, |i, c| {
                    let dx = self.data[2 * i] - mu[c][0];
                    let dy = self.data[2 * i + 1] - mu[c][1];
                    let p = &prec[c];
                    offset[c] - 0.5 * (p[0] * dx * dx + 2.0 * p[1] * dx * dy + p[2] * dy * dy)
                })
            }
            _ => {
                let comps: Vec<PreparedComponent> = mix
                    .means
                    .iter()
                    .zip(&mix.covariances)
                    .map(|(m, c)| PreparedComponent::new(m, c))
                    .collect::<Option<_>>()?;
                self.normalize_rows(resp, l, |i, c| log_w[c] + comps[c].log_pdf(self.row(i)))
            }
        }
    }

    fn normalize_rows(&self, resp: &mut [f64], l: usize, log_term: impl Fn(usize, usize) -> f64) -> Option<f64> {
        let mut ll = 0.0;
        for (i, row) in resp.chunks_exact_mut(l).enumerate() {
            let mut m = f64::NEG_INFINITY;
            for (c, r) in row.iter_mut().enumerate() {
                *r = log_term(i, c);
                m = m.max(*r);
            }
            if !m.is_finite() {
                return None;
            }
            let mut sum = 0.0;
            for r in row.iter_mut() {
                *r = (*r - m).exp();
                sum += *r;
            }
            for r in row.iter_mut() {
                *r /= sum;
            }
            ll += m + sum.ln();
        }
        Some(ll)
    }
}

fn is_degenerate(p: &Problem<'_>) -> bool {
    (0..p.d).any(|i| p.sample_cov[i * p.d + i] <= 0.0)
}

/// EM with restarts for every order in `1..=max_components`, keeping the
/// BIC-best model. Orders that would leave fewer than
/// [`SAMPLES_PER_COMPONENT`] rows per component are skipped.
pub fn fit_bic(data: &[f64], d: usize, kind: CovarianceKind, cfg: &EmConfig) -> Result<Selection> {
    if d == 0 || data.len() % d != 0 {
        return Err(Error::InvalidArgument(format!("{} values do not form rows of width {d}", data.len())));
    }
    let n = data.len() / d;
    if n < SAMPLES_PER_COMPONENT {
        return Err(Error::InvalidArgument(format!(
            "{n} samples is too few to fit a mixture (need at least {SAMPLES_PER_COMPONENT})"
        )));
    }
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: pos / d + 1,
            column: format!("x{}", pos % d + 1),
        });
    }
    let problem = Problem::new(data, d, kind, cfg.variance_floor);
    let ln_n = (n as f64).ln();
    let bic = |ll: f64, l: usize| -2.0 * ll + free_parameters(l, d, kind) as f64 * ln_n;

    let single = problem.single_component();
    let single_ll = log_likelihood(&single, data)?;
    if is_degenerate(&problem) && d == 1 {
        return Ok(Selection {
            mixture: single,
            log_likelihood: single_ll,
            bic: bic(single_ll, 1),
            path: vec![(1, single_ll, bic(single_ll, 1))],
            degenerate: true,
        });
    }

    let mut best = (single.clone(), single_ll, bic(single_ll, 1));
    let mut path = vec![(1, single_ll, best.2)];
    let l_cap = cfg.max_components.min(n / SAMPLES_PER_COMPONENT).max(1);
    for l in 2..=l_cap {
        let mut best_l: Option<(RawMixture, f64)> = None;
        for restart in 0..cfg.restarts.max(1) {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[l as u64, restart as u64]));
            if let Some((mix, ll)) = problem.run_em(l, cfg, &mut rng) {
                if best_l.as_ref().is_none_or(|(_, b)| ll > *b) {
                    best_l = Some((mix, ll));
                }
            }
        }
        let Some((mix, ll)) = best_l else {
            log::debug!("all restarts failed at {l} components");
            continue;
        };
        let b = bic(ll, l);
        path.push((l, ll, b));
        if b < best.2 {
            best = (mix, ll, b);
        }
    }
    Ok(Selection {
        mixture: best.0,
        log_likelihood: best.1,
        bic: best.2,
        path,
        degenerate: is_degenerate(&problem),
    })
}

/// Total log-likelihood of `data` under a mixture.
pub fn log_likelihood(mix: &RawMixture, data: &[f64]) -> Result<f64> {
    let comps = prepare(mix)?;
    let log_w: Vec<f64> = mix.weights.iter().map(|w| w.ln()).collect();
    let mut terms = vec![0.0; comps.len()];
    Ok(data
        .chunks_exact(mix.dim)
        .map(|x| {
            for (t, (c, lw)) in terms.iter_mut().zip(comps.iter().zip(&log_w)) {
                *t = lw + c.log_pdf(x);
            }
            log_sum_exp(&terms)
        })
        .sum())
}

pub(crate) fn prepare(mix: &RawMixture) -> Result<Vec<PreparedComponent>> {
    mix.means
        .iter()
        .zip(&mix.covariances)
        .map(|(m, c)| {
            PreparedComponent::new(m, c)
                .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))
        })
        .collect()
}
