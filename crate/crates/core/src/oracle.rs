//! Ground-truth engines used to check the approximations: exhaustive spin
//! enumeration, adaptive quadrature, Monte Carlo, and brute-force Wick pairing.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{Model, QuadraticBase, SiteKind};
use crate::special::{log_cosh, log_sum_exp};

pub const MAX_EXHAUSTIVE_SPINS: usize = 20;

/// Exact quantities of a small Ising model with ½-weighted spins.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactIsingSolution {
    pub log_z: f64,
    pub means: DVector<f64>,
    /// E[x_i x_j], unit diagonal.
    pub second: DMatrix<f64>,
}

impl ExactIsingSolution {
    /// `[p(-,-), p(-,+), p(+,-), p(+,+)]` for the pair `(i, j)`.
    pub fn pair_table(&self, i: usize, j: usize) -> [f64; 4] {
        let (mi, mj, e) = (self.means[i], self.means[j], self.second[(i, j)]);
        let p = |s: f64, t: f64| 0.25 * (1.0 + s * mi + t * mj + s * t * e);
        [p(-1.0, -1.0), p(-1.0, 1.0), p(1.0, -1.0), p(1.0, 1.0)]
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.second[(i, j)] - self.means[i] * self.means[j]
    }
}

/// Sum over all 2^N spin states of 2^{-N} exp(½ xᵀJx + θᵀx).
pub fn ising_exhaustive(j: &DMatrix<f64>, theta: &DVector<f64>) -> Result<ExactIsingSolution> {
    let n = theta.len();
    if n == 0 || j.nrows() != n || j.ncols() != n {
        return Err(invalid("couplings and fields must agree in size"));
    }
    if n > MAX_EXHAUSTIVE_SPINS {
        return Err(invalid(format!("refusing exhaustive enumeration of {n} > {MAX_EXHAUSTIVE_SPINS} spins")));
    }
    // Gray-code walk; `visit` sees every state once with its energy
    let walk = |visit: &mut dyn FnMut(&[f64], f64)| {
        let mut x = vec![-1.0; n];
        let mut field: Vec<f64> = (0..n).map(|k| (0..n).map(|m| j[(k, m)] * x[m]).sum()).collect();
        let mut energy: f64 =
            0.5 * (0..n).map(|k| x[k] * field[k]).sum::<f64>() + (0..n).map(|k| theta[k] * x[k]).sum::<f64>();
        visit(&x, energy);
        for step in 1u64..(1u64 << n) {
            let k = step.trailing_zeros() as usize;
            let old = x[k];
            energy += -2.0 * old * (field[k] + theta[k]);
            x[k] = -old;
            for m in 0..n {
                field[m] += j[(m, k)] * (-2.0 * old);
            }
            visit(&x, energy);
        }
    };
    let mut top = f64::NEG_INFINITY;
    walk(&mut |_, e| top = top.max(e));
    let mut z = 0.0;
    let mut s1 = vec![0.0; n];
    let mut s2 = DMatrix::<f64>::zeros(n, n);
    walk(&mut |x, e| {
        let w = (e - top).exp();
        z += w;
        for a in 0..n {
            let wa = w * x[a];
            s1[a] += wa;
            for b in (a + 1)..n {
                s2[(a, b)] += wa * x[b];
            }
        }
    });
    let mut second = DMatrix::identity(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            second[(a, b)] = s2[(a, b)] / z;
            second[(b, a)] = second[(a, b)];
        }
    }
    let log_z = top + z.ln() - n as f64 * std::f64::consts::LN_2;
    Ok(ExactIsingSolution { log_z, means: DVector::from_iterator(n, s1.iter().map(|v| v / z)), second })
}

/// Closed forms of the two-spin model with coupling J and no field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateClosedForms {
    pub log_z_exact: f64,
    pub log_z_ep: f64,
    /// Site precision at the EP fixed point, root of λ² − λ − J² = 0.
    pub lambda: f64,
    pub sigma12: f64,
}

pub fn bivariate_closed_forms(j: f64) -> BivariateClosedForms {
    let s = (1.0 + 4.0 * j * j).sqrt();
    let lambda = 0.5 * (1.0 + s);
    BivariateClosedForms {
        log_z_exact: log_cosh(j),
        log_z_ep: -0.5 + 0.5 * s - 0.5 * lambda.ln(),
        lambda,
        sigma12: j / (lambda * lambda - j * j),
    }
}

/// The site precision as printed for the two-spin fixed point, ½[J² + √(J⁴ + 4)].
/// It equals `bivariate_closed_forms(j).lambda` only at J = 0 and |J| = 1.
pub fn printed_bivariate_lambda(j: f64) -> f64 {
    0.5 * (j * j + (j.powi(4) + 4.0).sqrt())
}

// ---------------------------------------------------------------------------
// adaptive Gauss-Kronrod quadrature

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// ∫_a^b f by bisection until each panel's Kronrod/Gauss gap is below tolerance.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(invalid("integration limits must be finite"));
    }
    if b <= a {
        return Ok(0.0);
    }
    let mut stack = vec![(a, b, 0usize)];
    let mut total = 0.0;
    let mut panels = 0usize;
    while let Some((lo, hi, depth)) = stack.pop() {
        panels += 1;
        if panels > 200_000 {
            return Err(Error::OracleFailure("quadrature did not converge".into()));
        }
        let (v, err) = gk15(f, lo, hi);
        let local_tol = abs_tol * (hi - lo) / (b - a);
        if err <= local_tol.max(1e-15 * v.abs()) || depth > 50 {
            if depth > 50 && err > 1e-8 * v.abs().max(abs_tol) {
                return Err(Error::OracleFailure(format!("quadrature stalled on [{lo}, {hi}]")));
            }
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    Ok(total)
}

/// Moments of a tilted site distribution computed numerically.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureMoments {
    /// log ∫ t(x) exp(γx − ½Λx²) dx
    pub log_z: f64,
    pub mean: f64,
    /// `central[k]` = E[(x − mean)^k] for k = 2..=max_order; lower entries unused.
    pub central: Vec<f64>,
}

impl QuadratureMoments {
    /// Cumulants from central moments, orders 1..=6.
    pub fn cumulants(&self) -> Vec<f64> {
        let m = |k: usize| self.central.get(k).copied().unwrap_or(f64::NAN);
        vec![
            self.mean,
            m(2),
            m(3),
            m(4) - 3.0 * m(2) * m(2),
            m(5) - 10.0 * m(3) * m(2),
            m(6) - 15.0 * m(4) * m(2) - 10.0 * m(3) * m(3) + 30.0 * m(2).powi(3),
        ]
    }
}

/// Integration window and log-density of `t(x) exp(γx − ½Λx²)`.
fn site_window(site: &SiteKind, gamma: f64, lambda: f64) -> Result<(f64, f64)> {
    let mu = gamma / lambda;
    let sd = lambda.sqrt().recip();
    let span = 12.0 * sd;
    let (lo, hi) = match *site {
        SiteKind::Ising => unreachable!(),
        SiteKind::Probit { y, m, v } => {
            let lo = mu.min(m) - span;
            let hi = mu.max(m) + span;
            if v == 0.0 {
                if y > 0.0 {
                    (lo.max(m), hi)
                } else {
                    (lo, hi.min(m))
                }
            } else {
                (lo, hi)
            }
        }
        SiteKind::BoxCentered { a } => ((mu - span).max(-a), (mu + span).min(a)),
        SiteKind::BoxObserved { y, a } => ((mu - span).max(y - a), (mu + span).min(y + a)),
    };
    if !(hi > lo) {
        // no mass inside the window; fall back to the whole support
        return match *site {
            SiteKind::BoxCentered { a } => Ok((-a, a)),
            SiteKind::BoxObserved { y, a } => Ok((y - a, y + a)),
            _ => Err(Error::OracleFailure("empty integration window".into())),
        };
    }
    Ok((lo, hi))
}

fn log_tilted(site: &SiteKind, gamma: f64, lambda: f64, x: f64) -> f64 {
    let lt = site.log_t(x).unwrap_or(f64::NEG_INFINITY);
    lt + gamma * x - 0.5 * lambda * x * x
}

/// Tilted moments by adaptive quadrature (exact two-point sums for spins).
pub fn quadrature_site_moments(
    site: &SiteKind,
    gamma: f64,
    lambda: f64,
    max_order: usize,
) -> Result<QuadratureMoments> {
    if max_order > 6 {
        return Err(invalid("orders above 6 are not supported"));
    }
    if let SiteKind::Ising = site {
        let lw = [-gamma - 0.5 * lambda, gamma - 0.5 * lambda];
        let log_z = log_sum_exp(&lw) - std::f64::consts::LN_2;
        let pp = (lw[1] - log_sum_exp(&lw)).exp();
        let mean = 2.0 * pp - 1.0;
        let mut central = vec![0.0; max_order + 1];
        for (k, slot) in central.iter_mut().enumerate().skip(2) {
            *slot = pp * (1.0 - mean).powi(k as i32) + (1.0 - pp) * (-1.0 - mean).powi(k as i32);
        }
        return Ok(QuadratureMoments { log_z, mean, central });
    }
    if !(lambda > 0.0) {
        return Err(invalid("continuous sites need a positive cavity precision"));
    }
    let (lo, hi) = site_window(site, gamma, lambda)?;
    let grid = 4000;
    let shift = (0..=grid)
        .map(|i| log_tilted(site, gamma, lambda, lo + (hi - lo) * i as f64 / grid as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Err(Error::OracleFailure("tilted density vanishes on the window".into()));
    }
    let dens = |x: f64| (log_tilted(site, gamma, lambda, x) - shift).exp();
    let tol = 1e-14 * (hi - lo);
    let pieces = 16;
    let integ = |g: &dyn Fn(f64) -> f64| -> Result<f64> {
        let mut s = 0.0;
        for p in 0..pieces {
            let a = lo + (hi - lo) * p as f64 / pieces as f64;
            let b = lo + (hi - lo) * (p + 1) as f64 / pieces as f64;
            s += integrate(g, a, b, tol / pieces as f64)?;
        }
        Ok(s)
    };
    let mass = integ(&dens)?;
    let mean = integ(&|x| x * dens(x))? / mass;
    let mut central = vec![0.0; max_order + 1];
    for (k, slot) in central.iter_mut().enumerate().skip(2) {
        *slot = integ(&|x| (x - mean).powi(k as i32) * dens(x))? / mass;
    }
    Ok(QuadratureMoments { log_z: shift + mass.ln(), mean, central })
}

/// log E[exp(t x)] of the tilted site distribution for complex `t`.
pub fn site_log_mgf(site: &SiteKind, gamma: f64, lambda: f64, center: f64, t: Complex<f64>) -> Result<Complex<f64>> {
    if let SiteKind::Ising = site {
        let p = (0.5 * (1.0 + gamma.tanh())).clamp(0.0, 1.0);
        let e = |x: f64| (t * (x - center)).exp();
        return Ok((e(1.0) * p + e(-1.0) * (1.0 - p)).ln());
    }
    let (lo, hi) = site_window(site, gamma, lambda)?;
    let shift = log_tilted(site, gamma, lambda, (gamma / lambda).clamp(lo, hi));
    let mut shift = shift;
    for i in 0..=400 {
        shift = shift.max(log_tilted(site, gamma, lambda, lo + (hi - lo) * i as f64 / 400.0));
    }
    let dens = |x: f64| (log_tilted(site, gamma, lambda, x) - shift).exp();
    let tol = 1e-15 * (hi - lo);
    let mass = integrate(&dens, lo, hi, tol)?;
    let re = integrate(&|x| dens(x) * (t * (x - center)).exp().re, lo, hi, tol)?;
    let im = integrate(&|x| dens(x) * (t * (x - center)).exp().im, lo, hi, tol)?;
    Ok((Complex::new(re, im) / mass).ln())
}

/// Taylor coefficients `l! · [t^l] f(t)` for l = 1..=max_order by the trapezoidal
/// rule on a circle of radius `radius` (a spectrally accurate central difference).
pub fn contour_derivatives(
    f: &dyn Fn(Complex<f64>) -> Result<Complex<f64>>,
    radius: f64,
    points: usize,
    max_order: usize,
) -> Result<Vec<f64>> {
    let vals: Vec<Complex<f64>> = (0..points)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / points as f64;
            f(Complex::from_polar(radius, th))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(max_order);
    let mut fact = 1.0;
    for l in 1..=max_order {
        fact *= l as f64;
        let mut s = Complex::new(0.0, 0.0);
        for (k, v) in vals.iter().enumerate() {
            let th = 2.0 * std::f64::consts::PI * (k * l) as f64 / points as f64;
            s += v * Complex::from_polar(1.0, -th);
        }
        out.push((s / points as f64).re * fact / radius.powi(l as i32));
    }
    Ok(out)
}

/// Joint cumulants c_(l, l') of a spin pair from its probability table, by a
/// double contour over the joint log-mgf. Entry `[l][l']`, total order ≤ 4.
pub fn edge_cumulants_by_contour(p: &[f64; 4]) -> [[f64; 5]; 5] {
    let states = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)];
    let m1 = p[2] + p[3] - p[0] - p[1];
    let m2 = p[1] + p[3] - p[0] - p[2];
    let kfn = |t1: Complex<f64>, t2: Complex<f64>| {
        let mut s = Complex::new(0.0, 0.0);
        for (q, (a, b)) in p.iter().zip(states.iter()) {
            s += (t1 * (a - m1) + t2 * (b - m2)).exp() * *q;
        }
        s.ln()
    };
    let pts = 32;
    let r = 0.4;
    let mut out = [[0.0; 5]; 5];
    let grid: Vec<Vec<Complex<f64>>> = (0..pts)
        .map(|a| {
            (0..pts)
                .map(|b| {
                    let ta = Complex::from_polar(r, 2.0 * std::f64::consts::PI * a as f64 / pts as f64);
                    let tb = Complex::from_polar(r, 2.0 * std::f64::consts::PI * b as f64 / pts as f64);
                    kfn(ta, tb)
                })
                .collect()
        })
        .collect();
    for l in 0..=4usize {
        for lp in 0..=(4 - l) {
            if l + lp == 0 {
                continue;
            }
            let mut s = Complex::new(0.0, 0.0);
            for (a, row) in grid.iter().enumerate() {
                for (b, v) in row.iter().enumerate() {
                    let th = 2.0 * std::f64::consts::PI * ((a * l) as f64 + (b * lp) as f64) / pts as f64;
                    s += v * Complex::from_polar(1.0, -th);
                }
            }
            let fact = crate::special::factorial(l) * crate::special::factorial(lp);
            out[l][lp] = (s / (pts * pts) as f64).re * fact / r.powi((l + lp) as i32);
        }
    }
    out[1][0] += m1;
    out[0][1] += m2;
    out
}

// ---------------------------------------------------------------------------
// Monte Carlo

const SHARDS: u64 = 64;

fn shard_rng(seed: u64, shard: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

fn lower_cholesky(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = k.clone().cholesky() {
        return Ok(c.l());
    }
    let n = k.nrows();
    let jitter = 1e-10 * k.diagonal().mean();
    (k + DMatrix::identity(n, n) * jitter)
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::LinearAlgebra("covariance not positive definite".into()))
}

/// Fraction of N(0, K) draws inside [−a, a]^N, on the log scale, with a
/// delta-method standard error.
pub fn gp_box_mc(k: &DMatrix<f64>, a: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    if samples < 10_000 {
        return Err(invalid(format!("need at least 10^4 samples, got {samples}")));
    }
    if !(a > 0.0) {
        return Err(invalid("box half-width must be positive"));
    }
    let l = lower_cholesky(k)?;
    let n = l.nrows();
    let per = samples as u64 / SHARDS;
    let extra = samples as u64 % SHARDS;
    let hits: u64 = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut rng = shard_rng(seed, shard);
            let count = per + u64::from(shard < extra);
            let mut z = vec![0.0; n];
            let mut inside = 0u64;
            for _ in 0..count {
                let mut ok = true;
                for i in 0..n {
                    z[i] = rng.sample(StandardNormal);
                    let xi: f64 = (0..=i).map(|j| l[(i, j)] * z[j]).sum();
                    if xi.abs() >= a {
                        ok = false;
                        break;
                    }
                }
                inside += u64::from(ok);
            }
            inside
        })
        .sum();
    if hits == 0 {
        return Err(Error::EstimateUndefined { hits: 0, samples });
    }
    let p = hits as f64 / samples as f64;
    Ok((p.ln(), ((1.0 - p) / (samples as f64 * p)).sqrt()))
}

/// Self-normalized importance-sampling estimates for a kernel-mode model.
#[derive(Debug, Clone, PartialEq)]
pub struct McMoments {
    pub log_z: f64,
    pub log_z_se: f64,
    pub means: DVector<f64>,
    pub mean_se: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub ess: f64,
}

/// Importance sampling with the prior N(0, K) as proposal.
pub fn gp_model_mc_moments(model: &Model, samples: usize, seed: u64) -> Result<McMoments> {
    let k = match &model.base {
        QuadraticBase::Kernel { k, .. } => k.clone(),
        _ => return Err(invalid("Monte Carlo needs a kernel-mode model")),
    };
    let n = k.nrows();
    gp_model_mc_with_proposal(model, &DVector::zeros(n), &k, samples, seed)
}

/// Importance sampling with a Gaussian proposal N(m, S); useful when the
/// posterior is far from the prior.
pub fn gp_model_mc_with_proposal(
    model: &Model,
    proposal_mean: &DVector<f64>,
    proposal_cov: &DMatrix<f64>,
    samples: usize,
    seed: u64,
) -> Result<McMoments> {
    if model.sites.iter().any(|s| s.kind.is_discrete()) {
        return Err(invalid("Monte Carlo needs continuous sites"));
    }
    if !matches!(model.base, QuadraticBase::Kernel { .. }) {
        return Err(invalid("Monte Carlo needs a kernel-mode model"));
    }
    if samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let n = model.dim();
    let l = lower_cholesky(proposal_cov)?;
    let logdet_prop: f64 = l.diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let per = samples as u64 / SHARDS;
    let extra = samples as u64 % SHARDS;
    // each shard keeps (log weights, samples)
    let shards: Vec<Vec<(f64, DVector<f64>)>> = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut rng = shard_rng(seed, shard);
            let count = per + u64::from(shard < extra);
            let mut out = Vec::new();
            for _ in 0..count {
                let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let x = proposal_mean + &l * &z;
                let log_q = -0.5 * z.dot(&z) - 0.5 * logdet_prop - 0.5 * n as f64 * crate::special::ln_2pi();
                let lp = crate::model::log_density_unnormalized(model, &x).unwrap_or(f64::NEG_INFINITY);
                if lp > f64::NEG_INFINITY {
                    out.push((lp - log_q, x));
                }
            }
            out
        })
        .collect();
    let draws: Vec<(f64, DVector<f64>)> = shards.into_iter().flatten().collect();
    if draws.is_empty() {
        return Err(Error::OracleFailure(format!("no sample out of {samples} has positive weight")));
    }
    let top = draws.iter().map(|d| d.0).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = draws.iter().map(|d| (d.0 - top).exp()).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|v| v * v).sum();
    let ess = sw * sw / sw2;
    if ess < 100.0 {
        return Err(Error::OracleFailure(format!(
            "effective sample size {ess:.1} below 100 ({} of {samples} draws had weight)",
            draws.len()
        )));
    }
    let mut means = DVector::zeros(n);
    for (wi, (_, x)) in w.iter().zip(&draws) {
        means.axpy(*wi / sw, x, 1.0);
    }
    let mut cov = DMatrix::zeros(n, n);
    for (wi, (_, x)) in w.iter().zip(&draws) {
        let d = x - &means;
        cov.ger(*wi / sw, &d, &d, 1.0);
    }
    let mean_se = DVector::from_iterator(n, (0..n).map(|i| (cov[(i, i)] / ess).sqrt()));
    let mean_w = sw / samples as f64;
    let var_w =
        w.iter().map(|v| (v - mean_w) * (v - mean_w)).sum::<f64>() + (samples - draws.len()) as f64 * mean_w * mean_w;
    let var_w = var_w / samples as f64;
    Ok(McMoments {
        log_z: top + mean_w.ln(),
        log_z_se: (var_w / samples as f64).sqrt() / mean_w,
        means,
        mean_se,
        cov,
        ess,
    })
}

// ---------------------------------------------------------------------------
// Wick pairing

/// Sum over all perfect matchings of `symbols` (entries are group labels) of the
/// product of `relation[g][h]` over matched pairs. Returns the sum and the
/// number of matchings visited; odd counts give (0, 0).
pub fn wick_pairing_bruteforce(symbols: &[usize], relation: &[Vec<f64>]) -> Result<(f64, u64)> {
    if symbols.len() > 12 {
        return Err(invalid(format!("at most 12 symbols, got {}", symbols.len())));
    }
    if symbols.iter().any(|&g| g >= relation.len() || relation[g].len() < relation.len()) {
        return Err(invalid("symbol label outside the relation matrix"));
    }
    if symbols.len() % 2 == 1 {
        return Ok((0.0, 0));
    }
    fn rec(rest: &mut Vec<usize>, rel: &[Vec<f64>], acc: f64, sum: &mut f64, count: &mut u64) {
        if rest.is_empty() {
            *sum += acc;
            *count += 1;
            return;
        }
        let first = rest.remove(0);
        for i in 0..rest.len() {
            let other = rest.remove(i);
            rec(rest, rel, acc * rel[first][other], sum, count);
            rest.insert(i, other);
        }
        rest.insert(0, first);
    }
    let mut sum = 0.0;
    let mut count = 0;
    rec(&mut symbols.to_vec(), relation, 1.0, &mut sum, &mut count);
    Ok((sum, count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tiny_ising_cases() {
        let s = ising_exhaustive(&DMatrix::zeros(1, 1), &DVector::zeros(1)).unwrap();
        assert_eq!((s.log_z, s.means[0]), (0.0, 0.0));
        let j = 0.7;
        let jm = DMatrix::from_row_slice(2, 2, &[0.0, j, j, 0.0]);
        let s = ising_exhaustive(&jm, &DVector::zeros(2)).unwrap();
        assert_relative_eq!(s.log_z, j.cosh().ln(), max_relative = 1e-14);
        assert_relative_eq!(s.covariance(0, 1), j.tanh(), max_relative = 1e-14);
    }

    #[test]
    fn chain_of_three_by_hand() {
        let jm = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0]);
        let th = DVector::from_vec(vec![0.1, -0.2, 0.3]);
        let mut terms = vec![];
        for b in 0..8 {
            let x: Vec<f64> = (0..3).map(|k| if b >> k & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let e = 0.5 * x[0] * x[1] + 0.5 * x[1] * x[2] + 0.1 * x[0] - 0.2 * x[1] + 0.3 * x[2];
            terms.push(e);
        }
        let z: f64 = terms.iter().map(|e| e.exp()).sum::<f64>() / 8.0;
        let s = ising_exhaustive(&jm, &th).unwrap();
        assert_relative_eq!(s.log_z, z.ln(), max_relative = 1e-14);
        for i in 0..3 {
            for k in 0..3 {
                let t = s.pair_table(i, k);
                let mi = t[2] + t[3] - t[0] - t[1];
                if i != k {
                    assert_relative_eq!(mi, s.means[i], epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn refuses_large_n() {
        assert!(ising_exhaustive(&DMatrix::zeros(21, 21), &DVector::zeros(21)).is_err());
    }

    #[test]
    fn bivariate_closed_form_series() {
        let b = bivariate_closed_forms(0.0);
        assert_eq!((b.lambda, b.log_z_ep, b.sigma12), (1.0, 0.0, 0.0));
        let j: f64 = 0.01;
        let b = bivariate_closed_forms(j);
        assert_relative_eq!(b.log_z_ep, j * j / 2.0 - j.powi(4) / 4.0, epsilon = 1e-12);
        assert_relative_eq!(b.log_z_exact - b.log_z_ep, j.powi(4) / 6.0, epsilon = 1e-12);
        assert_relative_eq!(printed_bivariate_lambda(1.0), bivariate_closed_forms(1.0).lambda, epsilon = 1e-15);
    }

    #[test]
    fn gk_on_smooth_functions() {
        let v = integrate(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-13).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-13);
        let v = integrate(&|x: f64| (-x * x / 2.0).exp(), -12.0, 12.0, 1e-14).unwrap();
        assert_relative_eq!(v, (2.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn quadrature_gaussian_limit_and_box() {
        let q = quadrature_site_moments(&SiteKind::BoxCentered { a: 1e3 }, 0.5, 2.0, 6).unwrap();
        assert_relative_eq!(q.mean, 0.25, max_relative = 1e-12);
        assert_relative_eq!(q.central[2], 0.5, max_relative = 1e-12);
        assert_relative_eq!(q.central[4], 0.75, max_relative = 1e-11);
        let b = quadrature_site_moments(&SiteKind::BoxCentered { a: 1.0 }, 0.0, 1.0, 2).unwrap();
        assert!(b.central[2] < 1.0);
    }

    #[test]
    fn contour_recovers_gaussian_cumulants() {
        let f = |t: Complex<f64>| Ok(t * 0.3 + t * t * 0.5 * 2.0);
        let d = contour_derivatives(&f, 0.5, 32, 6).unwrap();
        assert_relative_eq!(d[0], 0.3, epsilon = 1e-12);
        assert_relative_eq!(d[1], 2.0, epsilon = 1e-12);
        for v in &d[2..] {
            assert!(v.abs() < 1e-10);
        }
    }

    #[test]
    fn wick_moments_of_one_variable() {
        let rel = vec![vec![2.0]];
        assert_eq!(wick_pairing_bruteforce(&[0; 4], &rel).unwrap(), (12.0, 3));
        assert_eq!(wick_pairing_bruteforce(&[0; 6], &rel).unwrap(), (120.0, 15));
        assert_eq!(wick_pairing_bruteforce(&[0; 5], &rel).unwrap().0, 0.0);
        assert!(wick_pairing_bruteforce(&[0; 14], &rel).is_err());
    }

    #[test]
    fn one_dimensional_box_mc() {
        let k = DMatrix::from_element(1, 1, 1.0);
        let a = 0.8;
        let (lz, se) = gp_box_mc(&k, a, 200_000, 7).unwrap();
        let exact = (2.0 * crate::special::norm_cdf(a) - 1.0).ln();
        assert!((lz - exact).abs() < 4.0 * se, "{lz} vs {exact} ± {se}");
        assert!(gp_box_mc(&k, 1e3, 10_000, 1).unwrap().0.abs() < 1e-12);
        assert!(gp_box_mc(&k, a, 100, 1).is_err());
    }

    #[test]
    fn mc_without_sites_returns_prior() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let m = Model::with_sites(QuadraticBase::kernel(k.clone()).unwrap(), vec![]).unwrap();
        let r = gp_model_mc_moments(&m, 20_000, 3).unwrap();
        assert!(r.log_z.abs() < 1e-12);
        assert!((r.cov[(0, 1)] - 0.5).abs() < 0.05);
        assert!(r.means.amax() < 0.05);
    }

    #[test]
    fn mc_one_dimensional_box() {
        let k = DMatrix::from_element(1, 1, 1.0);
        let m = Model::new(QuadraticBase::kernel(k).unwrap(), vec![SiteKind::BoxCentered { a: 0.7 }]).unwrap();
        let r = gp_model_mc_moments(&m, 100_000, 5).unwrap();
        let exact = (2.0 * crate::special::norm_cdf(0.7) - 1.0).ln();
        assert!((r.log_z - exact).abs() < 4.0 * r.log_z_se);
    }
}
