//! Scalar normal-distribution helpers.
//!
//! The bivariate orthant routine follows Genz's BVND algorithm (Drezner and
//! Wesolowsky's integral form with Gauss-Legendre quadrature, plus the
//! asymptotic expansion for |r| >= 0.925). Absolute error is around 1e-15.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal upper tail `P(Z > x)`.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Two-sided tail `P(|Z| >= |z|)`.
pub fn two_sided_tail(z: f64) -> f64 {
    libm::erfc(z.abs() * FRAC_1_SQRT_2)
}

/// `ln C(n, k)` through the log-gamma function.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    if k == 0 || k == n {
        return 0.0;
    }
    let n = n as f64;
    let k = k as f64;
    libm::lgamma(n + 1.0) - libm::lgamma(k + 1.0) - libm::lgamma(n - k + 1.0)
}

const GL6_W: [f64; 3] = [0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4];
const GL6_X: [f64; 3] = [-0.932_469_514_203_152_2, -0.661_209_386_466_264_7, -0.238_619_186_083_197];

const GL12_W: [f64; 6] = [
    0.047_175_336_386_511_77,
    0.106_939_325_995_318_3,
    0.160_078_328_543_346_4,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_7,
    0.249_147_045_813_402_9,
];
const GL12_X: [f64; 6] = [
    -0.981_560_634_246_719_1,
    -0.904_117_256_370_475,
    -0.769_902_674_194_305,
    -0.587_317_954_286_617_1,
    -0.367_831_498_998_180_2,
    -0.125_233_408_511_469_2,
];

const GL20_W: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];
const GL20_X: [f64; 10] = [
    -0.993_128_599_185_094_9,
    -0.963_971_927_277_913_8,
    -0.912_234_428_251_325_9,
    -0.839_116_971_822_218_8,
    -0.746_331_906_460_150_8,
    -0.636_053_680_726_515,
    -0.510_867_001_950_827_1,
    -0.373_706_088_715_419_6,
    -0.227_785_851_141_645_1,
    -0.076_526_521_133_497_33,
];

/// Upper orthant `P(X > h, Y > k)` for standard bivariate normal `(X, Y)`
/// with correlation `r` in `[-1, 1]`.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    let r = r.clamp(-1.0, 1.0);
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return std_normal_sf(k);
    }
    if k == f64::NEG_INFINITY {
        return std_normal_sf(h);
    }
    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&GL6_W, &GL6_X)
    } else if r.abs() < 0.75 {
        (&GL12_W, &GL12_X)
    } else {
        (&GL20_W, &GL20_X)
    };

    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for (wi, xi) in w.iter().zip(x) {
            for s in [-1.0, 1.0] {
                let sn = (asr * (s * xi + 1.0) / 2.0).sin();
                bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        bvn = bvn * asr / (4.0 * PI) + std_normal_sf(h) * std_normal_sf(k);
    } else {
        let mut k = k;
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let as_ = (1.0 - r) * (1.0 + r);
            let mut a = as_.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            bvn = a
                * (-(bs / as_ + hk) / 2.0).exp()
                * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
            if hk > -160.0 {
                let b = bs.sqrt();
                bvn -= (-hk / 2.0).exp()
                    * (2.0 * PI).sqrt()
                    * std_normal_cdf(-b / a)
                    * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a /= 2.0;
            for (wi, xi) in w.iter().zip(x) {
                for s in [-1.0, 1.0] {
                    let xs = (a * (s * xi + 1.0)).powi(2);
                    let rs = (1.0 - xs).sqrt();
                    bvn += a
                        * wi
                        * ((-bs / (2.0 * xs) - hk / (1.0 + rs)).exp() / rs
                            - (-(bs / xs + hk) / 2.0).exp() * (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
            bvn = -bvn / (2.0 * PI);
        }
        if r > 0.0 {
            bvn += std_normal_sf(h.max(k));
        } else {
            bvn = -bvn;
            if k > h {
                bvn += std_normal_cdf(k) - std_normal_cdf(h);
            }
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// Lower CDF `P(X < x, Y < y)`.
pub fn bvn_cdf(x: f64, y: f64, r: f64) -> f64 {
    bvn_upper(-x, -y, r)
}

/// `P(|X| >= a, |Y| >= b)` for standard bivariate normal with correlation `r`,
/// `a, b >= 0`. Evaluated as the sum of the four corner orthants so that
/// small masses keep their relative precision.
pub fn corner_mass(a: f64, b: f64, r: f64) -> f64 {
    let a = a.abs();
    let b = b.abs();
    let m = 2.0 * (bvn_upper(a, b, r) + bvn_upper(a, b, -r));
    m.clamp(0.0, 1.0)
}

/// `P(|X| < a, |Y| < b)` by inclusion-exclusion on the lower CDF.
pub fn central_rectangle(a: f64, b: f64, r: f64) -> f64 {
    let a = a.abs();
    let b = b.abs();
    let m = bvn_cdf(a, b, r) - bvn_cdf(-a, b, r) - bvn_cdf(a, -b, r) + bvn_cdf(-a, -b, r);
    m.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: P(X > h, Y > k) = int_h^inf phi(x) * P(Y > k | x) dx,
    // by composite Simpson on a truncated range.
    fn upper_by_quadrature(h: f64, k: f64, r: f64) -> f64 {
        let lo = h.max(-12.0);
        let hi = 12.0_f64;
        if lo >= hi {
            return 0.0;
        }
        let n = 40_000;
        let step = (hi - lo) / n as f64;
        let s = (1.0 - r * r).sqrt();
        let f = |x: f64| {
            let phi = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
            phi * std_normal_sf((k - r * x) / s)
        };
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            let x = lo + i as f64 * step;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        acc * step / 3.0
    }

    #[test]
    fn tails_match_known_values() {
        assert!((two_sided_tail(1.959_963_984_540_054) - 0.05).abs() < 1e-12);
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert_eq!(two_sided_tail(0.0), 1.0);
    }

    #[test]
    fn orthant_matches_quadrature() {
        let cases = [
            (0.0, 0.0, 0.0),
            (0.5, -0.3, 0.2),
            (1.0, 1.0, 0.8),
            (-1.2, 0.4, -0.6),
            (2.0, 1.5, 0.95),
            (0.3, 0.7, -0.95),
            (1.0, -1.0, -0.5),
            (2.5, 2.5, 0.5),
        ];
        for (h, k, r) in cases {
            let got = bvn_upper(h, k, r);
            let want = upper_by_quadrature(h, k, r);
            assert!((got - want).abs() < 1e-10, "h={h} k={k} r={r}: {got} vs {want}");
        }
    }

    #[test]
    fn orthant_at_origin_has_closed_form() {
        for r in [-0.9f64, -0.5, 0.0, 0.3, 0.99] {
            let want = 0.25 + r.asin() / (2.0 * PI);
            assert!((bvn_upper(0.0, 0.0, r) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn corner_mass_agrees_with_inclusion_exclusion() {
        for (a, b, r) in [(0.5, 0.5, 0.0), (1.0, 1.0, 0.8), (0.2, 1.7, -0.4), (1.5, 0.1, 0.93)] {
            let ie = 1.0 - (1.0 - two_sided_tail(a)) - (1.0 - two_sided_tail(b))
                + central_rectangle(a, b, r);
            assert!((corner_mass(a, b, r) - ie).abs() < 1e-12);
        }
    }

    #[test]
    fn corner_mass_independent_factorizes() {
        let got = corner_mass(1.3, 0.4, 0.0);
        let want = two_sided_tail(1.3) * two_sided_tail(0.4);
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn ln_choose_small_values() {
        assert!((ln_choose(10, 2) - 45f64.ln()).abs() < 1e-12);
        assert!((ln_choose(100, 3) - 161_700f64.ln()).abs() < 1e-11);
        assert_eq!(ln_choose(7, 0), 0.0);
    }
}
