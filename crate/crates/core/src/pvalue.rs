//! Mixture p-values.
//!
//! An observation is "more extreme" than `x` under component `l` when it lies
//! at least as far from that component's mean, coordinate by coordinate. The
//! per-component tail masses are averaged with the posterior component
//! probabilities of `x` itself.

use crate::gmm::{BivariateGmm, UnivariateGmm};
use crate::normal::{corner_mass, two_sided_tail};

/// Floor applied to every p-value so log-domain scores stay finite.
pub const P_MIN: f64 = 1e-300;

pub fn clamp_p(p: f64) -> f64 {
    if p.is_nan() {
        return P_MIN;
    }
    p.clamp(P_MIN, 1.0)
}

/// `sum_l P(|Y_l - mu_l| >= |x - mu_l|) * P(M(x) = l)`.
pub fn singleton_pvalue(model: &UnivariateGmm, x: f64) -> f64 {
    let resp = model.responsibilities(x);
    let p: f64 = resp
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > 0.0)
        .map(|(l, r)| r * two_sided_tail((x - model.means[l]) / model.variances[l].sqrt()))
        .sum();
    clamp_p(p)
}

/// Joint corner mass of the two coordinates, posterior-weighted over the
/// bivariate components.
pub fn pair_pvalue(model: &BivariateGmm, x: [f64; 2]) -> f64 {
    let resp = model.responsibilities(x);
    let p: f64 = resp
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > 0.0)
        .map(|(l, r)| {
            let c = &model.covariances[l];
            let sd0 = c[0][0].sqrt();
            let sd1 = c[1][1].sqrt();
            let a = (x[0] - model.means[l][0]).abs() / sd0;
            let b = (x[1] - model.means[l][1]).abs() / sd1;
            r * corner_mass(a, b, c[0][1] / (sd0 * sd1))
        })
        .sum();
    clamp_p(p)
}

/// `P[I_other | I_condition]`: the pair p-value divided by the singleton
/// p-value of the conditioning slot under the pair's own marginal.
pub fn conditional_pvalue(model: &BivariateGmm, x: [f64; 2], condition_slot: usize) -> f64 {
    let marginal = model
        .marginalize(condition_slot)
        .expect("condition slot must be 0 or 1");
    let denom = singleton_pvalue(&marginal, x[condition_slot]);
    clamp_p(pair_pvalue(model, x) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_deviation_is_certain() {
        assert_eq!(singleton_pvalue(&UnivariateGmm::normal(0.0, 1.0), 0.0), 1.0);
        let pair = BivariateGmm::normal([1.0, -1.0], [2.0, 0.5], 0.7);
        assert_eq!(pair_pvalue(&pair, [1.0, -1.0]), 1.0);
        assert_eq!(conditional_pvalue(&pair, [1.0, -1.0], 0), 1.0);
    }

    #[test]
    fn five_percent_point() {
        let p = singleton_pvalue(&UnivariateGmm::normal(0.0, 1.0), 1.959_964);
        assert!((p - 0.05).abs() < 1e-6);
    }

    #[test]
    fn uncorrelated_pair_factorizes() {
        let pair = BivariateGmm::normal([0.0, 2.0], [1.0, 3.0], 0.0);
        let x = [1.1, -0.5];
        let want = singleton_pvalue(&UnivariateGmm::normal(0.0, 1.0), x[0])
            * singleton_pvalue(&UnivariateGmm::normal(2.0, 9.0), x[1]);
        assert!((pair_pvalue(&pair, x) - want).abs() < 1e-8);
    }

    #[test]
    fn independent_conditional_equals_singleton() {
        let pair = BivariateGmm::normal([0.0, 0.0], [1.0, 1.0], 0.0);
        let x = [0.7, 1.9];
        let want = singleton_pvalue(&UnivariateGmm::normal(0.0, 1.0), x[1]);
        assert!((conditional_pvalue(&pair, x, 0) - want).abs() < 1e-8);
    }

    #[test]
    fn correlation_raises_conditional() {
        let pair = BivariateGmm::normal([0.0, 0.0], [1.0, 1.0], 0.8);
        let x = [2.0, 2.0];
        let uncond = singleton_pvalue(&UnivariateGmm::normal(0.0, 1.0), 2.0);
        assert!(conditional_pvalue(&pair, x, 0) > uncond);
    }

    #[test]
    fn tiny_tails_stay_positive() {
        let p = singleton_pvalue(&UnivariateGmm::normal(0.0, 1.0), 60.0);
        assert_eq!(p, P_MIN);
        let pair = BivariateGmm::normal([0.0, 0.0], [1.0, 1.0], 0.3);
        let q = pair_pvalue(&pair, [8.0, 9.0]);
        assert!(q > 0.0 && q < 1e-20, "{q}");
    }
}
