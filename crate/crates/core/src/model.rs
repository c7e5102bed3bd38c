//! Gaussian latent variable models: a quadratic base factor times one-dimensional site terms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cumulants::{self, CumulantTable};
use crate::error::{invalid, Error, Result};
use crate::special::{ln_2pi, log_cosh, log_norm_cdf};

/// Covariance functions for GP priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// `amplitude · exp(−½‖s − s'‖² / lengthscale²)`
    SquaredExponential { amplitude: f64, lengthscale: f64 },
    /// `exp(−|s − s'| / (2 · lengthscale))`
    OrnsteinUhlenbeck { lengthscale: f64 },
}

impl Kernel {
    pub fn squared_exponential(amplitude: f64, lengthscale: f64) -> Result<Self> {
        let k = Kernel::SquaredExponential { amplitude, lengthscale };
        k.validate()?;
        Ok(k)
    }

    pub fn ornstein_uhlenbeck(lengthscale: f64) -> Result<Self> {
        let k = Kernel::OrnsteinUhlenbeck { lengthscale };
        k.validate()?;
        Ok(k)
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Kernel::SquaredExponential { amplitude, lengthscale } => {
                amplitude > 0.0 && lengthscale > 0.0 && amplitude.is_finite() && lengthscale.is_finite()
            }
            Kernel::OrnsteinUhlenbeck { lengthscale } => lengthscale > 0.0 && lengthscale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("kernel hyperparameters must be positive: {self:?}")))
        }
    }

    pub fn eval(&self, s: &[f64], t: &[f64]) -> f64 {
        match *self {
            Kernel::SquaredExponential { amplitude, lengthscale } => {
                let d2: f64 = s.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
                amplitude * (-0.5 * d2 / (lengthscale * lengthscale)).exp()
            }
            Kernel::OrnsteinUhlenbeck { lengthscale } => {
                let d: f64 = s.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                (-d / (2.0 * lengthscale)).exp()
            }
        }
    }

    /// Gram matrix over `inputs`.
    pub fn matrix(&self, inputs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        self.validate()?;
        if inputs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("kernel inputs must be finite"));
        }
        let n = inputs.len();
        Ok(DMatrix::from_fn(n, n, |i, j| self.eval(&inputs[i], &inputs[j])))
    }

    pub fn matrix_1d(&self, inputs: &[f64]) -> Result<DMatrix<f64>> {
        let pts: Vec<Vec<f64>> = inputs.iter().map(|&s| vec![s]).collect();
        self.matrix(&pts)
    }

    /// Cross-covariances k(s_*, s_n) and the prior variance at `s_*`.
    pub fn cross(&self, inputs: &[Vec<f64>], star: &[f64]) -> (DVector<f64>, f64) {
        let k = DVector::from_iterator(inputs.len(), inputs.iter().map(|s| self.eval(s, star)));
        (k, self.eval(star, star))
    }
}

/// Gram matrix wrapped as a base factor; see [`QuadraticBase::kernel`].
pub fn kernel_eval(kernel: &Kernel, inputs: &[Vec<f64>]) -> Result<QuadraticBase> {
    QuadraticBase::kernel(kernel.matrix(inputs)?)
}

/// The Gaussian-form factor f_0.
///
/// In coupling mode `f_0(x) = exp(½ xᵀJx + θᵀx)`; in kernel mode
/// `f_0(x) = N(x; 0, K)`.
#[derive(Debug, Clone, PartialEq)]
pub enum QuadraticBase {
    Coupling { j: DMatrix<f64>, theta: DVector<f64> },
    Kernel { k: DMatrix<f64>, jitter: f64 },
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * scale))
}

impl QuadraticBase {
    pub fn coupling(j: DMatrix<f64>, theta: DVector<f64>) -> Result<Self> {
        let n = j.nrows();
        if j.ncols() != n || theta.len() != n || n == 0 {
            return Err(invalid("coupling matrix must be square and match the field length"));
        }
        if j.iter().chain(theta.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("couplings and fields must be finite"));
        }
        if !is_symmetric(&j) {
            return Err(invalid("coupling matrix must be symmetric"));
        }
        if (0..n).any(|i| j[(i, i)] != 0.0) {
            return Err(invalid("coupling matrix must have a zero diagonal"));
        }
        Ok(QuadraticBase::Coupling { j, theta })
    }

    /// Validates K and adds `1e-10 · mean(diag K)` to the diagonal if a
    /// Cholesky factorization fails.
    pub fn kernel(k: DMatrix<f64>) -> Result<Self> {
        let n = k.nrows();
        if k.ncols() != n || n == 0 {
            return Err(invalid("kernel matrix must be square and non-empty"));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(invalid("kernel matrix must be finite"));
        }
        if !is_symmetric(&k) {
            return Err(invalid("kernel matrix must be symmetric"));
        }
        let min_eig = k.clone().symmetric_eigen().eigenvalues.min();
        if min_eig <= -1e-10 {
            return Err(invalid(format!("kernel matrix is not positive semidefinite (eigenvalue {min_eig:e})")));
        }
        if k.clone().cholesky().is_some() {
            return Ok(QuadraticBase::Kernel { k, jitter: 0.0 });
        }
        let jitter = 1e-10 * k.diagonal().mean();
        let kj = &k + DMatrix::identity(n, n) * jitter;
        if kj.clone().cholesky().is_none() {
            return Err(Error::LinearAlgebra("kernel matrix singular even after jitter".into()));
        }
        Ok(QuadraticBase::Kernel { k: kj, jitter })
    }

    pub fn dim(&self) -> usize {
        match self {
            QuadraticBase::Coupling { j, .. } => j.nrows(),
            QuadraticBase::Kernel { k, .. } => k.nrows(),
        }
    }

    /// log f_0(x).
    pub fn log_f0(&self, x: &DVector<f64>) -> Result<f64> {
        match self {
            QuadraticBase::Coupling { j, theta } => Ok(0.5 * x.dot(&(j * x)) + theta.dot(x)),
            QuadraticBase::Kernel { k, .. } => {
                let chol = k.clone().cholesky().ok_or_else(|| Error::LinearAlgebra("kernel Cholesky failed".into()))?;
                let alpha = chol.solve(x);
                let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
                Ok(-0.5 * x.dot(&alpha) - 0.5 * logdet - 0.5 * x.len() as f64 * ln_2pi())
            }
        }
    }
}

/// One-dimensional site term t(x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum SiteKind {
    /// ½[δ(x − 1) + δ(x + 1)]
    Ising,
    /// Φ(y (x − m) / v); `v = 0` is the step Θ(y (x − m)).
    Probit {
        y: f64,
        #[serde(default)]
        m: f64,
        #[serde(default = "one")]
        v: f64,
    },
    /// 𝟙[|x| < a]
    BoxCentered { a: f64 },
    /// 𝟙[|x − y| < a]
    BoxObserved { y: f64, a: f64 },
}

fn one() -> f64 {
    1.0
}

/// Normalizer, mean and variance of `t(x) exp(γx − ½Λx²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedSummary {
    /// log ∫ t(x) exp(γx − ½Λx²) dx
    pub log_z: f64,
    pub mean: f64,
    pub variance: f64,
}

impl SiteKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SiteKind::Ising => Ok(()),
            SiteKind::Probit { y, m, v } => {
                if y != 1.0 && y != -1.0 {
                    return Err(invalid(format!("probit label must be +1 or -1, got {y}")));
                }
                if !(v >= 0.0 && v.is_finite() && m.is_finite()) {
                    return Err(invalid(format!("probit needs finite m and v >= 0, got m={m}, v={v}")));
                }
                Ok(())
            }
            SiteKind::BoxCentered { a } => {
                if a > 0.0 && a.is_finite() {
                    Ok(())
                } else {
                    Err(invalid(format!("box half-width must be positive, got {a}")))
                }
            }
            SiteKind::BoxObserved { y, a } => {
                if a > 0.0 && a.is_finite() && y.is_finite() {
                    Ok(())
                } else {
                    Err(invalid(format!("box needs finite y and a > 0, got y={y}, a={a}")))
                }
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, SiteKind::Ising)
    }

    pub fn name(&self) -> &'static str {
        match self {
            SiteKind::Ising => "ising",
            SiteKind::Probit { .. } => "probit",
            SiteKind::BoxCentered { .. } => "box_centered",
            SiteKind::BoxObserved { .. } => "box_observed",
        }
    }

    /// log t(x); `-inf` outside a box.
    pub fn log_t(&self, x: f64) -> Result<f64> {
        match *self {
            SiteKind::Ising => Err(invalid("spin sites have no density; use exhaustive enumeration")),
            SiteKind::Probit { y, m, v } => {
                if v == 0.0 {
                    Ok(if y * (x - m) > 0.0 { 0.0 } else { f64::NEG_INFINITY })
                } else {
                    Ok(log_norm_cdf(y * (x - m) / v))
                }
            }
            SiteKind::BoxCentered { a } => Ok(if x.abs() < a { 0.0 } else { f64::NEG_INFINITY }),
            SiteKind::BoxObserved { y, a } => Ok(if (x - y).abs() < a { 0.0 } else { f64::NEG_INFINITY }),
        }
    }

    fn check_cavity(&self, lambda: f64) -> Result<()> {
        if !self.is_discrete() && !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::CavityCollapse { site: 0, precision: lambda });
        }
        Ok(())
    }

    /// Tilted moments against the cavity exp(γx − ½Λx²).
    pub fn tilted(&self, gamma: f64, lambda: f64) -> Result<TiltedSummary> {
        self.check_cavity(lambda)?;
        if !gamma.is_finite() {
            return Err(invalid("cavity field must be finite"));
        }
        match *self {
            SiteKind::Ising => {
                let mean = gamma.tanh();
                let ch = gamma.cosh();
                let variance = 1.0 / (ch * ch);
                if !(variance > 1e-300) {
                    return Err(Error::DivergedSite {
                        site: 0,
                        reason: format!("spin fully polarised by cavity field {gamma}"),
                    });
                }
                Ok(TiltedSummary { log_z: -0.5 * lambda + log_cosh(gamma), mean, variance })
            }
            _ => {
                let (c, log_mass) = self.cavity_cumulants(gamma, lambda)?;
                let gauss = 0.5 * gamma * gamma / lambda + 0.5 * (ln_2pi() - lambda.ln());
                Ok(TiltedSummary { log_z: gauss + log_mass, mean: c.get(1)?, variance: c.get(2)? })
            }
        }
    }

    /// Cumulants of the tilted distribution, as many orders as the closed forms provide.
    pub fn tilted_cumulants(&self, gamma: f64, lambda: f64) -> Result<CumulantTable> {
        self.check_cavity(lambda)?;
        match *self {
            SiteKind::Ising => cumulants::ising_site_cumulants(gamma.tanh()),
            _ => Ok(self.cavity_cumulants(gamma, lambda)?.0),
        }
    }

    /// Continuous kinds: cumulants and log of the site mass under the normalized cavity.
    fn cavity_cumulants(&self, gamma: f64, lambda: f64) -> Result<(CumulantTable, f64)> {
        let mu = gamma / lambda;
        match *self {
            SiteKind::Ising => unreachable!(),
            SiteKind::Probit { y, m, v } => cumulants::probit_with_log_z(y, m, v, mu, 1.0 / lambda),
            SiteKind::BoxCentered { a } => box_cumulants(a, mu, lambda, 0.0),
            SiteKind::BoxObserved { y, a } => box_cumulants(a, mu - y, lambda, y),
        }
    }
}

fn box_cumulants(a: f64, offset: f64, lambda: f64, shift: f64) -> Result<(CumulantTable, f64)> {
    let (mut table, log_z) = cumulants::truncated_noncentered(a, offset, lambda)?;
    if offset == 0.0 {
        let centered = cumulants::truncated_centered_cumulants(a, lambda)?;
        table = centered;
    }
    table.set(1, table.get(1)? + shift);
    Ok((table, log_z))
}

/// Free-function form of [`SiteKind::tilted`].
pub fn tilted_summary(site: &SiteKind, cavity_gamma: f64, cavity_lambda: f64) -> Result<TiltedSummary> {
    site.tilted(cavity_gamma, cavity_lambda)
}

/// A site term attached to one variable, raised to power `power`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub kind: SiteKind,
    pub var: usize,
    pub power: f64,
}

impl Site {
    pub fn new(kind: SiteKind, var: usize) -> Self {
        Site { kind, var, power: 1.0 }
    }

    pub fn with_power(kind: SiteKind, var: usize, power: f64) -> Self {
        Site { kind, var, power }
    }
}

/// p(x) ∝ f_0(x) ∏_a t_a(x_{v(a)})^{D_a}.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub base: QuadraticBase,
    pub sites: Vec<Site>,
}

impl Model {
    /// One unit-power site per variable, in variable order.
    pub fn new(base: QuadraticBase, kinds: Vec<SiteKind>) -> Result<Self> {
        if kinds.len() != base.dim() {
            return Err(invalid(format!("site count {} does not match dimension {}", kinds.len(), base.dim())));
        }
        let sites = kinds.into_iter().enumerate().map(|(i, k)| Site::new(k, i)).collect();
        Self::with_sites(base, sites)
    }

    /// General factor list: several sites may share a variable, powers may differ from one.
    pub fn with_sites(base: QuadraticBase, sites: Vec<Site>) -> Result<Self> {
        let n = base.dim();
        for (i, s) in sites.iter().enumerate() {
            s.kind.validate().map_err(|e| invalid(format!("site {i}: {e}")))?;
            if s.var >= n {
                return Err(invalid(format!("site {i} refers to variable {} of {n}", s.var)));
            }
            if !(s.power != 0.0 && s.power.is_finite()) {
                return Err(invalid(format!("site {i} has power {}", s.power)));
            }
        }
        if matches!(base, QuadraticBase::Coupling { .. }) {
            for v in 0..n {
                if !sites.iter().any(|s| s.var == v) {
                    return Err(invalid(format!("variable {v} has no site; coupling mode needs one")));
                }
            }
        }
        Ok(Model { base, sites })
    }

    /// Ising model with couplings `j` and fields `theta`.
    pub fn ising(j: DMatrix<f64>, theta: DVector<f64>) -> Result<Self> {
        let n = j.nrows();
        Self::new(QuadraticBase::coupling(j, theta)?, vec![SiteKind::Ising; n])
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn is_ising(&self) -> bool {
        matches!(self.base, QuadraticBase::Coupling { .. }) && self.sites.iter().all(|s| s.kind.is_discrete())
    }

    /// True when site `i` sits on variable `i` with unit power.
    pub fn is_plain(&self) -> bool {
        self.sites.len() == self.dim() && self.sites.iter().enumerate().all(|(i, s)| s.var == i && s.power == 1.0)
    }

    pub fn couplings(&self) -> Option<(&DMatrix<f64>, &DVector<f64>)> {
        match &self.base {
            QuadraticBase::Coupling { j, theta } => Some((j, theta)),
            _ => None,
        }
    }
}

/// log f_0(x) + Σ_a D_a log t_a(x); continuous sites only.
pub fn log_density_unnormalized(model: &Model, x: &DVector<f64>) -> Result<f64> {
    if x.len() != model.dim() || x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("point must be finite with the model's dimension"));
    }
    let mut acc = 0.0;
    for s in &model.sites {
        let lt = s.kind.log_t(x[s.var])?;
        if lt == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        acc += s.power * lt;
    }
    Ok(acc + model.base.log_f0(x)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_values() {
        let se = Kernel::squared_exponential(1.0, 1.0).unwrap();
        assert_eq!(se.eval(&[0.3], &[0.3]), 1.0);
        let ou = Kernel::ornstein_uhlenbeck(1.0).unwrap();
        assert_relative_eq!(ou.eval(&[0.0], &[2.0]), (-1.0f64).exp());
        assert!(Kernel::ornstein_uhlenbeck(0.0).is_err());
        assert!(Kernel::squared_exponential(-1.0, 1.0).is_err());
        let k = ou.matrix_1d(&[0.0, 0.5, 1.0]).unwrap();
        for (i, si) in [0.0f64, 0.5, 1.0].iter().enumerate() {
            for (j, sj) in [0.0f64, 0.5, 1.0].iter().enumerate() {
                assert_eq!(k[(i, j)], (-(si - sj).abs() / 2.0).exp());
            }
        }
    }

    #[test]
    fn base_validation() {
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(QuadraticBase::coupling(j, DVector::zeros(2)).is_err());
        let j = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, 1.0, 0.0]);
        assert!(QuadraticBase::coupling(j, DVector::zeros(2)).is_err());
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(QuadraticBase::kernel(k).is_err());
        // rank one: needs jitter
        let k = DMatrix::from_element(3, 3, 1.0);
        match QuadraticBase::kernel(k).unwrap() {
            QuadraticBase::Kernel { jitter, .. } => assert!(jitter > 0.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn ising_tilted() {
        let t = SiteKind::Ising.tilted(0.0, 0.7).unwrap();
        assert_eq!((t.mean, t.variance), (0.0, 1.0));
        let t = SiteKind::Ising.tilted(1.0, -0.3).unwrap();
        assert_relative_eq!(t.mean, 1f64.tanh(), max_relative = 1e-15);
        assert_relative_eq!(t.variance, 1.0 - 1f64.tanh().powi(2), max_relative = 1e-14);
        assert_relative_eq!(t.log_z, 0.15 + 1f64.cosh().ln(), max_relative = 1e-14);
    }

    #[test]
    fn box_uniform_limit_and_observed_equivalence() {
        let t = SiteKind::BoxCentered { a: 0.5 }.tilted(0.0, 1e-9).unwrap();
        assert_relative_eq!(t.variance, 0.25 / 3.0, max_relative = 1e-7);
        let c = SiteKind::BoxCentered { a: 1.2 }.tilted(0.3, 0.8).unwrap();
        let o = SiteKind::BoxObserved { y: 0.0, a: 1.2 }.tilted(0.3, 0.8).unwrap();
        assert_eq!(c, o);
        assert!(SiteKind::BoxCentered { a: 1.0 }.tilted(0.0, -1.0).is_err());
    }

    #[test]
    fn density_conventions() {
        let base = QuadraticBase::kernel(DMatrix::identity(2, 2)).unwrap();
        let m = Model::new(base.clone(), vec![SiteKind::BoxCentered { a: 1.0 }; 2]).unwrap();
        let x = DVector::from_vec(vec![0.2, -0.4]);
        assert_eq!(log_density_unnormalized(&m, &x).unwrap(), base.log_f0(&x).unwrap());
        let out = DVector::from_vec(vec![0.2, -1.4]);
        assert_eq!(log_density_unnormalized(&m, &out).unwrap(), f64::NEG_INFINITY);
        let p = Model::new(base.clone(), vec![SiteKind::Probit { y: -1.0, m: 0.0, v: 1.0 }; 2]).unwrap();
        let z = DVector::zeros(2);
        assert_relative_eq!(
            log_density_unnormalized(&p, &z).unwrap(),
            -2.0 * std::f64::consts::LN_2 + base.log_f0(&z).unwrap(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn site_json_shape() {
        let s: SiteKind = serde_json::from_str(r#"{"kind":"probit","params":{"y":-1}}"#).unwrap();
        assert_eq!(s, SiteKind::Probit { y: -1.0, m: 0.0, v: 1.0 });
        let s: SiteKind = serde_json::from_str(r#"{"kind":"ising"}"#).unwrap();
        assert_eq!(s, SiteKind::Ising);
    }
}
