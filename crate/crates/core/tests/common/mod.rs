//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use gadscan::data::DataBatch;
use gadscan::deptree::{build_tree, log_joint_pvalue};
use gadscan::gmm::{BivariateGmm, UnivariateGmm};
use gadscan::nullmodel::{pair_count, NullModel};
use gadscan::pvalue::P_MIN;
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn ln_binomial_f64(n: usize, k: usize) -> f64 {
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// Exhaustive minimum of the corrected score over every non-empty subset.
pub fn brute_force_subset(log_p: &[f64], dim: usize, n_features: usize, t_u: usize) -> (f64, Vec<usize>) {
    let t = log_p.len();
    let feature = ln_binomial_f64(dim, n_features);
    let mut best = (f64::INFINITY, vec![]);
    for mask in 1u32..(1 << t) {
        let members: Vec<usize> = (0..t).filter(|i| mask >> i & 1 == 1).collect();
        let s = feature + ln_binomial_f64(t_u, members.len()) + members.iter().map(|&i| log_p[i]).sum::<f64>();
        if s < best.0 {
            best = (s, members);
        }
    }
    best
}

fn big_binomial(n: usize, k: usize) -> BigUint {
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc *= BigUint::from((n - i) as u64);
        acc /= BigUint::from((i + 1) as u64);
    }
    acc
}

/// `ln( C(D, N_c) * C(T_u, T_c) * prod(m_i / 1000) )` evaluated as one exact rational.
pub fn exact_log_score(dim: usize, n_features: usize, t_u: usize, permille: &[u32]) -> f64 {
    let mut num = big_binomial(dim, n_features) * big_binomial(t_u, permille.len());
    let mut den = BigUint::from(1u32);
    for &m in permille {
        num *= BigUint::from(m);
        den *= BigUint::from(1000u32);
    }
    num.to_f64().unwrap().ln() - den.to_f64().unwrap().ln()
}

/// Maximum total weight over every spanning tree of `nodes`, by edge-subset enumeration.
pub fn brute_force_tree_weight(nodes: &[usize], weight: impl Fn(usize, usize) -> f64) -> f64 {
    let n = nodes.len();
    if n <= 1 {
        return 0.0;
    }
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let mut best = f64::NEG_INFINITY;
    let m = edges.len();
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != n - 1 {
            continue;
        }
        let mut comp: Vec<usize> = (0..n).collect();
        fn root(c: &mut [usize], mut x: usize) -> usize {
            while c[x] != x {
                x = c[x];
            }
            x
        }
        let mut ok = true;
        let mut w = 0.0;
        for (e, &(a, b)) in edges.iter().enumerate() {
            if mask >> e & 1 == 0 {
                continue;
            }
            let (ra, rb) = (root(&mut comp, a), root(&mut comp, b));
            if ra == rb {
                ok = false;
                break;
            }
            comp[ra] = rb;
            w += weight(nodes[a], nodes[b]);
        }
        if ok && w > best {
            best = w;
        }
    }
    best
}

/// Standard-normal null over `dim` features with the given MI matrix.
pub fn normal_null(dim: usize, mi: Vec<Vec<f64>>) -> NullModel {
    NullModel::from_parts(
        vec![UnivariateGmm::normal(0.0, 1.0); dim],
        vec![BivariateGmm::normal([0.0, 0.0], [1.0, 1.0], 0.0); pair_count(dim)],
        mi,
        1000,
    )
    .unwrap()
}

/// A random null with correlated pairs, a few bimodal features and a random MI matrix.
pub fn random_null(dim: usize, rng: &mut ChaCha8Rng) -> NullModel {
    let univariate = (0..dim)
        .map(|_| {
            if rng.random::<bool>() {
                UnivariateGmm::normal(rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0))
            } else {
                UnivariateGmm::new(vec![0.5, 0.5], vec![-2.0, 2.0], vec![1.0, 1.0]).unwrap()
            }
        })
        .collect();
    let bivariate = (0..pair_count(dim))
        .map(|_| BivariateGmm::normal([0.0, 0.0], [1.0, 1.0], rng.random_range(-0.8..0.8)))
        .collect();
    let mut mi = vec![vec![0.0; dim]; dim];
    for j in 0..dim {
        for k in j + 1..dim {
            let v = rng.random_range(0.0..1.0);
            mi[j][k] = v;
            mi[k][j] = v;
        }
    }
    NullModel::from_parts(univariate, bivariate, mi, 1000).unwrap()
}

pub fn random_batch(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> DataBatch {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect())
        .collect();
    DataBatch::from_rows(&rows, dim).unwrap()
}

/// Best `(log score, features, selected samples)` over every feature subset
/// up to `k_max`, each with its optimal sample subset of at least `min_size`.
pub fn exhaustive_search(
    model: &NullModel,
    batch: &DataBatch,
    k_max: usize,
    min_size: usize,
) -> (f64, Vec<usize>, Vec<usize>) {
    let dim = model.dim();
    let t_u = batch.len();
    let mut best = (f64::INFINITY, vec![], vec![]);
    for mask in 1u32..(1 << dim) {
        let features: Vec<usize> = (0..dim).filter(|f| mask >> f & 1 == 1).collect();
        if features.len() > k_max {
            continue;
        }
        let tree = build_tree(model, &features);
        let lp: Vec<f64> = batch.rows().map(|x| log_joint_pvalue(model, &tree, x)).collect();
        let mut order: Vec<usize> = (0..t_u).collect();
        order.sort_by(|&a, &b| lp[a].total_cmp(&lp[b]).then(a.cmp(&b)));
        let mut cum = 0.0;
        for k in 1..=t_u {
            cum += lp[order[k - 1]];
            if k < min_size {
                continue;
            }
            let s = ln_binomial_f64(dim, features.len()) + ln_binomial_f64(t_u, k) + cum;
            if s < best.0 {
                best = (s, features.clone(), order[..k].to_vec());
            }
        }
    }
    best
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn clamp_ln(p: f64) -> f64 {
    p.max(P_MIN).ln()
}
