//! Closed-form cumulants of the tilted site distributions.
//!
//! Univariate tables hold orders 1..=6, bivariate (edge) tables hold joint
//! orders `(l, l')` with `l + l' <= 4`.

use crate::error::{invalid, Error, Result};
use crate::special::{inv_mills, log_norm_interval, log_norm_pdf, norm_pdf};

pub const MAX_ORDER: usize = 6;
pub const MAX_EDGE_ORDER: usize = 4;

/// log of the smallest normalizer we are willing to divide by.
const LOG_Z_FLOOR: f64 = -690.775_527_898_213_7; // ln(1e-300)

#[derive(Debug, Clone, PartialEq)]
pub struct CumulantTable {
    pub kind: &'static str,
    values: [Option<f64>; MAX_ORDER + 1],
}

impl CumulantTable {
    pub fn new(kind: &'static str) -> Self {
        CumulantTable { kind, values: [None; MAX_ORDER + 1] }
    }

    /// Table with orders `1..=c.len()` filled.
    pub fn from_orders(kind: &'static str, c: &[f64]) -> Self {
        let mut t = Self::new(kind);
        for (i, v) in c.iter().enumerate() {
            t.values[i + 1] = Some(*v);
        }
        t
    }

    pub fn set(&mut self, order: usize, value: f64) {
        self.values[order] = Some(value);
    }

    pub fn get(&self, order: usize) -> Result<f64> {
        self.values
            .get(order)
            .copied()
            .flatten()
            .ok_or_else(|| Error::UnsupportedOrder { order, kind: self.kind.to_string() })
    }

    pub fn has(&self, order: usize) -> bool {
        self.get(order).is_ok()
    }

    pub fn max_order(&self) -> usize {
        (1..=MAX_ORDER).rev().find(|&l| self.has(l)).unwrap_or(0)
    }
}

/// Joint cumulants `c_(l, l')` of a pair of variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeCumulants {
    c: [[f64; MAX_EDGE_ORDER + 1]; MAX_EDGE_ORDER + 1],
}

impl EdgeCumulants {
    pub fn get(&self, l: usize, lp: usize) -> Result<f64> {
        if l + lp > MAX_EDGE_ORDER {
            return Err(Error::UnsupportedOrder { order: l + lp, kind: "ising edge".into() });
        }
        Ok(self.c[l][lp])
    }

    /// The table seen from the other end of the edge.
    pub fn swapped(&self) -> Self {
        let mut c = [[0.0; MAX_EDGE_ORDER + 1]; MAX_EDGE_ORDER + 1];
        for (l, row) in self.c.iter().enumerate() {
            for (lp, v) in row.iter().enumerate() {
                c[lp][l] = *v;
            }
        }
        EdgeCumulants { c }
    }
}

/// Cumulants of a ±1 spin with mean `m`.
pub fn ising_site_cumulants(m: f64) -> Result<CumulantTable> {
    if !(m.abs() < 1.0) {
        return Err(invalid(format!("spin mean must lie in (-1, 1), got {m}")));
    }
    let m2 = m * m;
    let m3 = m2 * m;
    let m4 = m2 * m2;
    let c = [
        m,
        1.0 - m2,
        -2.0 * m + 2.0 * m3,
        -2.0 + 8.0 * m2 - 6.0 * m4,
        16.0 * m - 40.0 * m3 + 24.0 * m4 * m,
        16.0 - 136.0 * m2 + 240.0 * m4 - 120.0 * m4 * m2,
    ];
    Ok(CumulantTable::from_orders("ising", &c))
}

/// c1..c5 from the raw moments <x>..<x^5>.
pub fn moments_to_cumulants(m: &[f64; 5]) -> [f64; 5] {
    let [x1, x2, x3, x4, x5] = *m;
    let c3 = x3 - 3.0 * x2 * x1 + 2.0 * x1.powi(3);
    let c4 = x4 - 4.0 * x3 * x1 - 3.0 * x2 * x2 + 12.0 * x2 * x1 * x1 - 6.0 * x1.powi(4);
    let c5 = x5 - 5.0 * x4 * x1 - 10.0 * x3 * x2 + 20.0 * x3 * x1 * x1 + 30.0 * x2 * x2 * x1 - 60.0 * x2 * x1.powi(3)
        + 24.0 * x1.powi(5);
    [x1, x2 - x1 * x1, c3, c4, c5]
}

/// Moments of a standard normal restricted to `[lo, hi]`: log P(lo < u < hi),
/// the mean, and the central moments of orders 2..=5.
pub(crate) fn standard_truncated_moments(lo: f64, hi: f64) -> Result<(f64, f64, [f64; 4])> {
    let half = 0.5 * (hi - lo);
    if half < 1.0 {
        return narrow_truncated_moments(lo, hi);
    }
    let log_z = log_norm_interval(lo, hi);
    if !(log_z > LOG_Z_FLOOR) {
        return Err(diverged(lo, hi));
    }
    // density at the end points relative to the mass
    let r = |z: f64| {
        if z.is_finite() {
            (log_norm_pdf(z) - log_z).exp()
        } else {
            0.0
        }
    };
    let (rl, rh) = (r(lo), r(hi));
    let b = |j: i32| {
        let tl = if rl == 0.0 { 0.0 } else { lo.powi(j) * rl };
        let th = if rh == 0.0 { 0.0 } else { hi.powi(j) * rh };
        tl - th
    };
    let mut m = [0.0; 6];
    m[0] = 1.0;
    m[1] = b(0);
    for k in 2..=5 {
        m[k] = (k as f64 - 1.0) * m[k - 2] + b(k as i32 - 1);
    }
    let c = moments_to_cumulants(&[m[1], m[2], m[3], m[4], m[5]]);
    // central moments from cumulants
    let (k2, k3, k4, k5) = (c[1], c[2], c[3], c[4]);
    Ok((log_z, m[1], [k2, k3, k4 + 3.0 * k2 * k2, k5 + 10.0 * k3 * k2]))
}

fn diverged(lo: f64, hi: f64) -> Error {
    Error::DivergedSite { site: 0, reason: format!("truncation mass below 1e-300 on [{lo:.3}, {hi:.3}]") }
}

/// Narrow windows: the end-point recursion cancels, so integrate the
/// polynomial-times-exponential directly with Gauss-Legendre.
fn narrow_truncated_moments(lo: f64, hi: f64) -> Result<(f64, f64, [f64; 4])> {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let (nodes, weights) = crate::special::gauss_legendre(48);
    let mut dens = Vec::with_capacity(nodes.len());
    let mut vs = Vec::with_capacity(nodes.len());
    let mut logs = Vec::with_capacity(nodes.len());
    for &t in nodes.iter() {
        let v = h * t;
        logs.push(-c * v - 0.5 * v * v);
        vs.push(v);
    }
    let shift = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut mass = 0.0;
    for (l, w) in logs.iter().zip(weights.iter()) {
        let d = w * (l - shift).exp();
        dens.push(d);
        mass += d;
    }
    let log_z = log_norm_pdf(c) + shift + (h * mass).ln();
    if !(log_z > LOG_Z_FLOOR) {
        return Err(diverged(lo, hi));
    }
    let mean_v: f64 = vs.iter().zip(&dens).map(|(v, d)| v * d).sum::<f64>() / mass;
    let mut cm = [0.0; 4];
    for (v, d) in vs.iter().zip(&dens) {
        let e = v - mean_v;
        let mut p = e * e;
        for slot in cm.iter_mut() {
            *slot += p * d;
            p *= e;
        }
    }
    for slot in cm.iter_mut() {
        *slot /= mass;
    }
    Ok((log_z, c + mean_v, cm))
}

/// Cumulants of N(x; 0, 1/λ) restricted to |x| < a, orders 1..=6.
pub fn truncated_centered_cumulants(a: f64, lambda: f64) -> Result<CumulantTable> {
    if !(a > 0.0 && a.is_finite() && lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("need finite a > 0 and lambda > 0, got a={a}, lambda={lambda}")));
    }
    let z = a * lambda.sqrt();
    let (m2, m4, m6) = if z <= 1.0 { centered_moments_series(a, lambda) } else { centered_moments_closed(a, lambda) };
    let c2 = m2;
    let c4 = m4 - 3.0 * m2 * m2;
    let c6 = m6 - 15.0 * m4 * m2 + 30.0 * m2.powi(3);
    Ok(CumulantTable::from_orders("box", &[0.0, c2, 0.0, c4, 0.0, c6]))
}

/// Even moments from the λ-derivatives of log(2Φ(z) − 1).
fn centered_moments_closed(a: f64, lambda: f64) -> (f64, f64, f64) {
    let sl = lambda.sqrt();
    let z = a * sl;
    let r = norm_pdf(z) / libm::erf(z / std::f64::consts::SQRT_2);
    let a2 = a * a;
    let a3 = a2 * a;
    let big_a1 = a / sl * r;
    let big_a2 = -a2 / (2.0 * lambda) * z * r - a / (2.0 * lambda * sl) * r - a2 / lambda * r * r;
    let l2 = lambda * lambda;
    let l15 = lambda * sl;
    let big_a3 = 3.0 * a / (4.0 * l2 * sl) * r
        + 3.0 * a2 / (4.0 * l2) * z * r
        + 3.0 * a2 / (2.0 * l2) * r * r
        + 2.0 * a3 / l15 * r.powi(3)
        + 3.0 * a3 / (2.0 * l15) * r * (z * r)
        + a3 / (4.0 * l15) * (z * z - 1.0) * r;
    let m2 = 1.0 / lambda - 2.0 * big_a1;
    let m4 = 2.0 / l2 + m2 * m2 + 4.0 * big_a2;
    let m6 = 8.0 / (l2 * lambda) + 3.0 * m2 * m4 - 2.0 * m2.powi(3) - 8.0 * big_a3;
    (m2, m4, m6)
}

/// Even moments by expanding exp(-λx²/2) under the integral, for small a√λ
/// where the closed form cancels catastrophically.
fn centered_moments_series(a: f64, lambda: f64) -> (f64, f64, f64) {
    let integral = |k: i32| {
        let mut sum = 0.0;
        let mut coef = 1.0; // (-λ/2)^j / j!
        let mut apow = a.powi(k + 1);
        for j in 0..60 {
            let term = coef * 2.0 * apow / (k + 2 * j + 1) as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
            coef *= -lambda / 2.0 / (j + 1) as f64;
            apow *= a * a;
        }
        sum
    };
    let i0 = integral(0);
    (integral(2) / i0, integral(4) / i0, integral(6) / i0)
}

/// Cumulants of N(x; μ, 1/λ) restricted to |x| < a, orders 1..=5, plus
/// log(Φ(z_max) − Φ(z_min)).
pub fn truncated_noncentered_cumulants(a: f64, mu: f64, lambda: f64) -> Result<CumulantTable> {
    Ok(truncated_noncentered(a, mu, lambda)?.0)
}

pub(crate) fn truncated_noncentered(a: f64, mu: f64, lambda: f64) -> Result<(CumulantTable, f64)> {
    if !(a > 0.0 && a.is_finite() && lambda > 0.0 && lambda.is_finite() && mu.is_finite()) {
        return Err(invalid(format!("need finite a > 0, lambda > 0 and mu, got a={a}, mu={mu}, lambda={lambda}")));
    }
    let sl = lambda.sqrt();
    let z_max = sl * (mu + a);
    let z_min = sl * (mu - a);
    // u = √λ (x − μ) lives on [−z_max, −z_min]
    let (log_z, mean_u, cm) = standard_truncated_moments(-z_max, -z_min)?;
    let (k2, k3) = (cm[0] / lambda, cm[1] / (lambda * sl));
    let (m4, m5) = (cm[2] / (lambda * lambda), cm[3] / (lambda * lambda * sl));
    let c = [mu + mean_u / sl, k2, k3, m4 - 3.0 * k2 * k2, m5 - 10.0 * k3 * k2];
    Ok((CumulantTable::from_orders("box", &c), log_z))
}

/// Cumulants of Φ(y (x − m)/v) N(x; μ, σ²), orders 1..=4. `v = 0` is the step function.
pub fn probit_cumulants(y: f64, m: f64, v: f64, mu: f64, sigma2: f64) -> Result<CumulantTable> {
    Ok(probit_with_log_z(y, m, v, mu, sigma2)?.0)
}

/// Also returns log Φ(z).
pub(crate) fn probit_with_log_z(y: f64, m: f64, v: f64, mu: f64, sigma2: f64) -> Result<(CumulantTable, f64)> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(invalid(format!("sigma2 must be positive, got {sigma2}")));
    }
    if !(v >= 0.0 && v.is_finite()) {
        return Err(invalid(format!("slope v must be >= 0, got {v}")));
    }
    if y != 1.0 && y != -1.0 {
        return Err(invalid(format!("label must be +1 or -1, got {y}")));
    }
    // reflect x -> -x for negative labels
    let (mu_r, m_r) = (y * mu, y * m);
    let s = (v * v + sigma2).sqrt();
    let z = (mu_r - m_r) / s;
    let alpha = sigma2 / s;
    let beta = inv_mills(z);
    let c1 = mu_r + alpha * beta;
    let c2 = sigma2 - alpha * alpha * beta * (z + beta);
    let c3 = alpha.powi(3) * beta * (2.0 * beta * beta + 3.0 * z * beta + z * z - 1.0);
    let c4 = -alpha.powi(4)
        * beta
        * (6.0 * beta.powi(3) + 12.0 * z * beta * beta + 7.0 * z * z * beta + z.powi(3) - 4.0 * beta - 3.0 * z);
    if !(c2 > 0.0) {
        return Err(Error::DivergedSite { site: 0, reason: format!("probit variance underflow at z={z:.3}") });
    }
    let c = [y * c1, c2, y * c3, c4];
    Ok((CumulantTable::from_orders("probit", &c), crate::special::log_norm_cdf(z)))
}

/// Joint cumulants of a pair of ±1 spins from the table
/// `p = [p(-,-), p(-,+), p(+,-), p(+,+)]`.
pub fn ising_edge_cumulants(p: &[f64; 4]) -> Result<EdgeCumulants> {
    let total: f64 = p.iter().sum();
    if p.iter().any(|&v| !(v >= -1e-15)) || (total - 1.0).abs() > 1e-10 {
        return Err(invalid(format!("not a probability table: {p:?}")));
    }
    let m1 = p[2] + p[3] - p[0] - p[1];
    let m2 = p[1] + p[3] - p[0] - p[2];
    let e12 = p[0] + p[3] - p[1] - p[2];
    Ok(edge_cumulants_from_moments(m1, m2, e12 - m1 * m2))
}

/// Build the full joint table from means and covariance via the spin recursions.
pub fn edge_cumulants_from_moments(m1: f64, m2: f64, cov: f64) -> EdgeCumulants {
    let mut c = [[0.0; MAX_EDGE_ORDER + 1]; MAX_EDGE_ORDER + 1];
    c[1][0] = m1;
    c[0][1] = m2;
    c[2][0] = 1.0 - m1 * m1;
    c[0][2] = 1.0 - m2 * m2;
    c[1][1] = cov;
    c[3][0] = -2.0 * c[1][0] * c[2][0];
    c[0][3] = -2.0 * c[0][1] * c[0][2];
    c[2][1] = -2.0 * c[1][0] * c[1][1];
    c[1][2] = -2.0 * c[0][1] * c[1][1];
    c[4][0] = -2.0 * c[2][0] * c[2][0] - 2.0 * c[1][0] * c[3][0];
    c[0][4] = -2.0 * c[0][2] * c[0][2] - 2.0 * c[0][1] * c[0][3];
    c[3][1] = -2.0 * c[2][0] * c[1][1] - 2.0 * c[1][0] * c[2][1];
    c[1][3] = -2.0 * c[0][2] * c[1][1] - 2.0 * c[0][1] * c[1][2];
    c[2][2] = -2.0 * c[1][1] * c[1][1] + 4.0 * c[1][0] * c[0][1] * c[1][1];
    EdgeCumulants { c }
}
