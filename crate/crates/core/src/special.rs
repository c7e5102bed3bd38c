//! Standard normal density, distribution function and the stable ratios built on them.

use std::f64::consts::{PI, SQRT_2};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

#[inline]
pub fn log_norm_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Φ(z).
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Mills ratio Φ(-t)/φ(t) for t ≥ 6 by Lentz's continued fraction.
fn mills_ratio_tail(t: f64) -> f64 {
    // R(t) = 1/(t + 1/(t + 2/(t + 3/(t + ...))))
    let tiny = 1e-300;
    let mut f = t;
    let mut c = t;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = t + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = t + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// log Φ(z), accurate far into the lower tail.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z < -6.0 {
        log_norm_pdf(z) + mills_ratio_tail(-z).ln()
    } else if z > 6.0 {
        (-0.5 * libm::erfc(z / SQRT_2)).ln_1p()
    } else {
        norm_cdf(z).ln()
    }
}

/// φ(z)/Φ(z) without forming 0/0 in the lower tail.
pub fn inv_mills(z: f64) -> f64 {
    if z < -6.0 {
        1.0 / mills_ratio_tail(-z)
    } else {
        norm_pdf(z) / norm_cdf(z)
    }
}

/// log(Φ(hi) − Φ(lo)) for lo < hi, using whichever tail keeps precision.
pub fn log_norm_interval(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return f64::NEG_INFINITY;
    }
    if lo > 0.0 {
        // Φ(-lo) - Φ(-hi)
        let a = log_norm_cdf(-lo);
        let b = log_norm_cdf(-hi);
        a + log1m_exp(b - a)
    } else if hi < 0.0 {
        let a = log_norm_cdf(hi);
        let b = log_norm_cdf(lo);
        a + log1m_exp(b - a)
    } else {
        let out = norm_cdf(lo) + norm_cdf(-hi);
        (-out).ln_1p()
    }
}

/// log(1 − e^x) for x ≤ 0.
pub fn log1m_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// log(cosh x) without overflow.
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn double_factorial_odd(m: usize) -> u64 {
    // (2m-1)!!
    (1..=m).fold(1u64, |acc, k| acc * (2 * k as u64 - 1))
}

pub fn ln_2pi() -> f64 {
    (2.0 * PI).ln()
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let step = p1 / dp;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cdf_reference_values() {
        assert_relative_eq!(norm_cdf(0.0), 0.5, epsilon = 1e-16);
        assert_relative_eq!(norm_cdf(1.0), 0.841_344_746_068_542_9, max_relative = 1e-14);
        assert_relative_eq!(norm_cdf(-3.0), 0.001_349_898_031_630_094_6, max_relative = 1e-13);
    }

    #[test]
    fn log_cdf_matches_direct_and_tail() {
        for &z in &[-5.9, -6.0, -6.1, -3.0, 0.5, 5.0] {
            assert_relative_eq!(log_norm_cdf(z), norm_cdf(z).ln(), max_relative = 1e-12);
        }
        // log Φ(-40) from the asymptotic series to many digits
        assert_relative_eq!(log_norm_cdf(-40.0), -804.608_442_013_753_8, max_relative = 1e-13);
    }

    #[test]
    fn inv_mills_continuous_at_switch() {
        let a = norm_pdf(-6.0) / norm_cdf(-6.0);
        assert_relative_eq!(inv_mills(-6.0 - 1e-12), a, max_relative = 1e-10);
        // φ(z)/Φ(z) ≈ -z for very negative z
        assert!((inv_mills(-50.0) - 50.0).abs() < 0.03);
    }

    #[test]
    fn interval_agrees_with_difference() {
        let cases = [(-1.0, 2.0), (0.5, 1.5), (-3.0, -1.0), (-0.2, 0.1)];
        for &(lo, hi) in &cases {
            let direct = (norm_cdf(hi) - norm_cdf(lo)).ln();
            assert_relative_eq!(log_norm_interval(lo, hi), direct, max_relative = 1e-12);
        }
        // far tail: Φ(-30)-Φ(-31) is dominated by Φ(-30)
        let v = log_norm_interval(30.0, 31.0);
        assert_relative_eq!(v, log_norm_cdf(-30.0), max_relative = 1e-12);
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(12);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert_relative_eq!(s, 2.0 / 11.0, max_relative = 1e-14);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn small_helpers() {
        assert_relative_eq!(log_cosh(0.3), 0.3f64.cosh().ln(), max_relative = 1e-14);
        assert_relative_eq!(log_cosh(800.0), 800.0 - std::f64::consts::LN_2);
        assert_eq!(binomial(6, 2), 15.0);
        assert_eq!(double_factorial_odd(3), 15);
        assert_relative_eq!(log_sum_exp(&[0.0, 0.0]), std::f64::consts::LN_2);
    }
}
