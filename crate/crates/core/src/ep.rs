//! Fully factorized Gaussian EP / EC with per-site powers.
//!
//! The approximation is q(x) ∝ f_0(x) ∏_a g_a(x)^{D_a} with
//! g_a(x) = exp(γ_a x_v − ½ λ_a x_v²). The tilted distribution of site `a`
//! is q f_a / g_a and the site is refit so that q's marginal on `v` matches it.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cumulants::CumulantTable;
use crate::error::{invalid, Error, Result};
use crate::model::{Model, QuadraticBase};
use crate::special::ln_2pi;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Sequential,
    RandomPermutation { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpConfig {
    /// Weight kept on the old site parameters, in [0, 1).
    pub damping: f64,
    pub max_sweeps: usize,
    pub tol: f64,
    pub schedule: Schedule,
    /// Cavities of continuous sites with variance below this (or negative) are skipped.
    pub min_cavity_variance: f64,
}

impl EpConfig {
    pub fn ising() -> Self {
        EpConfig { damping: 0.5, ..Self::gp() }
    }

    pub fn gp() -> Self {
        EpConfig {
            damping: 0.0,
            max_sweeps: 2000,
            tol: 1e-10,
            schedule: Schedule::Sequential,
            min_cavity_variance: 1e-12,
        }
    }

    pub fn for_model(model: &Model) -> Self {
        if model.is_ising() {
            Self::ising()
        } else {
            Self::gp()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(invalid(format!("damping must lie in [0, 1), got {}", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol must be positive"));
        }
        if self.max_sweeps == 0 {
            return Err(invalid("max_sweeps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub site_gamma: Vec<f64>,
    pub site_lambda: Vec<f64>,
    /// log Z_a = log ∫ q(x) t_a(x) / g_a(x) dx at the returned parameters.
    pub site_log_z: Vec<f64>,
    pub converged: bool,
    /// max over sites of |tilted mean − q mean| and |tilted variance − q variance|.
    pub residual: f64,
    pub sweeps: usize,
}

impl GaussianState {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn marginal(&self, i: usize) -> (f64, f64) {
        (self.mu[i], self.sigma[(i, i)])
    }
}

/// q's mean and covariance for given site parameters.
pub(crate) fn gaussian_from_sites(
    model: &Model,
    gamma: &[f64],
    lambda: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (t, h) = site_totals(model, gamma, lambda);
    match &model.base {
        QuadraticBase::Coupling { j, theta } => {
            let prec = DMatrix::from_diagonal(&t) - j;
            let chol =
                prec.cholesky().ok_or_else(|| Error::InvalidState("q has an indefinite precision matrix".into()))?;
            let sigma = chol.inverse();
            let mu = &sigma * (theta + h);
            Ok((mu, symmetrize(sigma)))
        }
        QuadraticBase::Kernel { k, .. } => {
            let n = k.nrows();
            let mut b = k.clone();
            for (c, tc) in t.iter().enumerate() {
                b.column_mut(c).scale_mut(*tc);
            }
            b += DMatrix::identity(n, n);
            let lu = b.lu();
            let sigma = lu.solve(k).ok_or_else(|| Error::InvalidState("I + K T is singular".into()))?;
            let sigma = symmetrize(sigma);
            if (0..n).any(|i| !(sigma[(i, i)] > 0.0)) || sigma.clone().cholesky().is_none() {
                return Err(Error::InvalidState("q has an indefinite covariance".into()));
            }
            let mu = &sigma * h;
            Ok((mu, sigma))
        }
    }
}

/// Per-variable totals Σ_a D_a λ_a and Σ_a D_a γ_a.
fn site_totals(model: &Model, gamma: &[f64], lambda: &[f64]) -> (DVector<f64>, DVector<f64>) {
    let n = model.dim();
    let mut t = DVector::zeros(n);
    let mut h = DVector::zeros(n);
    for (a, s) in model.sites.iter().enumerate() {
        t[s.var] += s.power * lambda[a];
        h[s.var] += s.power * gamma[a];
    }
    (t, h)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// log Z_q = log ∫ f_0(x) ∏_a g_a(x)^{D_a} dx.
fn log_z_q(model: &Model, gamma: &[f64], lambda: &[f64], mu: &DVector<f64>) -> Result<f64> {
    let (t, h) = site_totals(model, gamma, lambda);
    match &model.base {
        QuadraticBase::Coupling { j, theta } => {
            let prec = DMatrix::from_diagonal(&t) - j;
            let chol =
                prec.cholesky().ok_or_else(|| Error::InvalidState("q has an indefinite precision matrix".into()))?;
            let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            let hh = theta + h;
            Ok(0.5 * mu.len() as f64 * ln_2pi() - 0.5 * logdet + 0.5 * hh.dot(mu))
        }
        QuadraticBase::Kernel { k, .. } => {
            let n = k.nrows();
            let mut b = k.clone();
            for (c, tc) in t.iter().enumerate() {
                b.column_mut(c).scale_mut(*tc);
            }
            b += DMatrix::identity(n, n);
            let det = b.lu().determinant();
            if !(det > 0.0) {
                return Err(Error::InvalidState("det(I + K T) is not positive".into()));
            }
            Ok(-0.5 * det.ln() + 0.5 * h.dot(mu))
        }
    }
}

/// Cavity natural parameters of site `a`: q's marginal on its variable with g_a divided out once.
fn cavity_of(
    model: &Model,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    gamma: &[f64],
    lambda: &[f64],
    a: usize,
) -> (f64, f64) {
    let v = model.sites[a].var;
    let s = sigma[(v, v)];
    (mu[v] / s - gamma[a], 1.0 / s - lambda[a])
}

/// Cavity (γ, Λ) for site `a` of a solved state.
pub fn cavity(state: &GaussianState, model: &Model, a: usize) -> Result<(f64, f64)> {
    if a >= model.sites.len() {
        return Err(invalid(format!("no site {a}")));
    }
    let (g, l) = cavity_of(model, &state.mu, &state.sigma, &state.site_gamma, &state.site_lambda, a);
    if !model.sites[a].kind.is_discrete() && !(l > 0.0) {
        return Err(Error::CavityCollapse { site: a, precision: l });
    }
    Ok((g, l))
}

fn site_err(e: Error, a: usize) -> Error {
    match e {
        Error::DivergedSite { reason, .. } => Error::DivergedSite { site: a, reason },
        Error::CavityCollapse { precision, .. } => Error::CavityCollapse { site: a, precision },
        other => other,
    }
}

/// log Z_a for every site given q.
fn site_log_zs(
    model: &Model,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    gamma: &[f64],
    lambda: &[f64],
) -> Result<Vec<f64>> {
    (0..model.sites.len())
        .map(|a| {
            let v = model.sites[a].var;
            let s = sigma[(v, v)];
            let (gc, lc) = cavity_of(model, mu, sigma, gamma, lambda, a);
            let t = model.sites[a].kind.tilted(gc, lc).map_err(|e| site_err(e, a))?;
            Ok(t.log_z - 0.5 * mu[v] * mu[v] / s - 0.5 * (ln_2pi() + s.ln()))
        })
        .collect()
}

/// log Z_EP = log Z_q + Σ_a D_a log Z_a as a function of arbitrary site parameters.
pub fn log_z_ep_at(model: &Model, gamma: &[f64], lambda: &[f64]) -> Result<f64> {
    let (mu, sigma) = gaussian_from_sites(model, gamma, lambda)?;
    let lzq = log_z_q(model, gamma, lambda, &mu)?;
    let lza = site_log_zs(model, &mu, &sigma, gamma, lambda)?;
    Ok(lzq + model.sites.iter().zip(&lza).map(|(s, z)| s.power * z).sum::<f64>())
}

/// log Z_EP of a converged state.
pub fn log_z_ep(state: &GaussianState, model: &Model) -> Result<f64> {
    if !state.converged {
        return Err(Error::InvalidState(format!(
            "EP did not converge (residual {:e}); Z_EP is undefined",
            state.residual
        )));
    }
    log_z_ep_at(model, &state.site_gamma, &state.site_lambda)
}

/// Largest moment mismatch over all sites.
fn moment_residual(
    model: &Model,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    gamma: &[f64],
    lambda: &[f64],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for a in 0..model.sites.len() {
        let v = model.sites[a].var;
        let (gc, lc) = cavity_of(model, mu, sigma, gamma, lambda, a);
        let t = model.sites[a].kind.tilted(gc, lc).map_err(|e| site_err(e, a))?;
        worst = worst.max((t.mean - mu[v]).abs()).max((t.variance - sigma[(v, v)]).abs());
    }
    Ok(worst)
}

fn initial_lambda(model: &Model) -> Vec<f64> {
    match &model.base {
        QuadraticBase::Kernel { .. } => vec![0.0; model.sites.len()],
        QuadraticBase::Coupling { j, .. } => {
            // shift the total precision past the top eigenvalue of J so that q starts proper
            let top = j.clone().symmetric_eigen().eigenvalues.max();
            let target = 1.0 + top.max(0.0);
            let mut dsum = vec![0.0; model.dim()];
            for s in &model.sites {
                dsum[s.var] += s.power;
            }
            model.sites.iter().map(|s| target / dsum[s.var]).collect()
        }
    }
}

/// Run EP to a fixed point. Non-convergence is reported through `converged`.
pub fn ep_solve(model: &Model, config: &EpConfig) -> Result<GaussianState> {
    config.validate()?;
    let n_sites = model.sites.len();
    let mut gamma = vec![0.0; n_sites];
    let mut lambda = initial_lambda(model);
    let (mut mu, mut sigma) = gaussian_from_sites(model, &gamma, &lambda)?;
    let mut order: Vec<usize> = (0..n_sites).collect();
    let mut rng = match config.schedule {
        Schedule::RandomPermutation { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Schedule::Sequential => None,
    };
    let mut failures = 0usize;
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < config.max_sweeps {
        if let Some(r) = rng.as_mut() {
            order.shuffle(r);
        }
        for &a in &order {
            match update_site(model, config, a, &mut mu, &mut sigma, &mut gamma, &mut lambda)? {
                true => failures = 0,
                false => {
                    failures += 1;
                    if failures >= 3 {
                        let (_, lc) = cavity_of(model, &mu, &sigma, &gamma, &lambda, a);
                        return Err(Error::CavityCollapse { site: a, precision: lc });
                    }
                }
            }
        }
        sweeps += 1;
        let fresh = gaussian_from_sites(model, &gamma, &lambda)?;
        mu = fresh.0;
        sigma = fresh.1;
        residual = moment_residual(model, &mu, &sigma, &gamma, &lambda)?;
        if residual <= config.tol {
            break;
        }
    }
    let site_log_z = site_log_zs(model, &mu, &sigma, &gamma, &lambda)?;
    Ok(GaussianState {
        mu,
        sigma,
        site_gamma: gamma,
        site_lambda: lambda,
        site_log_z,
        converged: residual <= config.tol,
        residual,
        sweeps,
    })
}

/// One damped moment-matching update with a rank-one refresh of q.
/// Returns false when the cavity was unusable and the site was skipped.
fn update_site(
    model: &Model,
    config: &EpConfig,
    a: usize,
    mu: &mut DVector<f64>,
    sigma: &mut DMatrix<f64>,
    gamma: &mut [f64],
    lambda: &mut [f64],
) -> Result<bool> {
    let site = model.sites[a];
    let v = site.var;
    let d = site.power;
    let s_vv = sigma[(v, v)];
    let (gc, lc) = cavity_of(model, mu, sigma, gamma, lambda, a);
    if !site.kind.is_discrete() && !(lc > 0.0 && 1.0 / lc >= config.min_cavity_variance) {
        return Ok(false);
    }
    let tilt = site.kind.tilted(gc, lc).map_err(|e| site_err(e, a))?;
    // natural parameters of q's marginal without this site's D-weighted contribution
    let rest_l = 1.0 / s_vv - d * lambda[a];
    let rest_g = mu[v] / s_vv - d * gamma[a];
    let new_l = (1.0 / tilt.variance - rest_l) / d;
    let new_g = (tilt.mean / tilt.variance - rest_g) / d;
    // fractional powers amplify a site change by 1/D; scale the step back down
    let mut step = (1.0 - config.damping) * d.abs().min(1.0);
    for _ in 0..12 {
        let dl = step * (new_l - lambda[a]);
        let dg = step * (new_g - gamma[a]);
        let dt = d * dl;
        let dh = d * dg;
        let denom = 1.0 + dt * s_vv;
        if denom > 1e-10 {
            let col = sigma.column(v).clone_owned();
            let shift = (dh - dt * mu[v]) / denom;
            mu.axpy(shift, &col, 1.0);
            sigma.ger(-dt / denom, &col, &col, 1.0);
            lambda[a] += dl;
            gamma[a] += dg;
            return Ok(true);
        }
        step *= 0.5;
    }
    Ok(false)
}

/// Max-norm of the central finite-difference gradient of log Z_EP with respect
/// to every site's (γ, λ).
pub fn stationarity_residual(state: &GaussianState, model: &Model) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut g = state.site_gamma.clone();
    let mut l = state.site_lambda.clone();
    for a in 0..model.sites.len() {
        for which in 0..2 {
            let eval = |g: &[f64], l: &[f64]| log_z_ep_at(model, g, l).unwrap_or(f64::NAN);
            let target = if which == 0 { &mut g } else { &mut l };
            let x0 = target[a];
            target[a] = x0 + h;
            let up = eval(&g, &l);
            let target = if which == 0 { &mut g } else { &mut l };
            target[a] = x0 - h;
            let down = eval(&g, &l);
            let target = if which == 0 { &mut g } else { &mut l };
            target[a] = x0;
            let grad = (up - down) / (2.0 * h);
            if !grad.is_finite() {
                return f64::INFINITY;
            }
            worst = worst.max(grad.abs());
        }
    }
    worst
}

/// Tilted cumulant tables for every site at the state's cavities.
pub fn site_cumulants(state: &GaussianState, model: &Model) -> Result<Vec<CumulantTable>> {
    (0..model.sites.len())
        .map(|a| {
            let (gc, lc) = cavity(state, model, a)?;
            model.sites[a].kind.tilted_cumulants(gc, lc).map_err(|e| site_err(e, a))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Site, SiteKind};
    use approx::assert_relative_eq;

    fn pair(j: f64) -> Model {
        let jm = DMatrix::from_row_slice(2, 2, &[0.0, j, j, 0.0]);
        Model::ising(jm, DVector::zeros(2)).unwrap()
    }

    #[test]
    fn bivariate_fixed_point() {
        for &j in &[0.1, 0.3, 0.5, 1.0] {
            let m = pair(j);
            let st = ep_solve(&m, &EpConfig::ising()).unwrap();
            assert!(st.converged);
            let lam = 0.5 * (1.0 + (1.0 + 4.0 * j * j).sqrt());
            assert_relative_eq!(st.site_lambda[0], lam, epsilon = 1e-9);
            assert_relative_eq!(st.sigma[(0, 0)], 1.0, epsilon = 1e-9);
            assert_relative_eq!(st.sigma[(0, 1)], j / lam, epsilon = 1e-9);
            let lz = log_z_ep(&st, &m).unwrap();
            let s = (1.0 + 4.0 * j * j).sqrt();
            let closed = -0.5 + 0.5 * s - 0.5 * (0.5 * (1.0 + s)).ln();
            assert_relative_eq!(lz, closed, epsilon = 1e-9);
        }
    }

    #[test]
    fn independent_spins_are_exact() {
        let theta = DVector::from_vec(vec![0.3, -0.7, 1.1]);
        let m = Model::ising(DMatrix::zeros(3, 3), theta.clone()).unwrap();
        let st = ep_solve(&m, &EpConfig::ising()).unwrap();
        assert!(st.converged);
        for i in 0..3 {
            assert_relative_eq!(st.mu[i], theta[i].tanh(), epsilon = 1e-10);
        }
        let exact: f64 = theta.iter().map(|t| t.cosh().ln()).sum();
        assert_relative_eq!(log_z_ep(&st, &m).unwrap(), exact, epsilon = 1e-9);
        assert!(stationarity_residual(&st, &m) < 1e-8);
    }

    #[test]
    fn unconverged_state_is_refused() {
        let m = pair(0.5);
        let cfg = EpConfig { max_sweeps: 1, ..EpConfig::ising() };
        let st = ep_solve(&m, &cfg).unwrap();
        assert!(!st.converged);
        assert!(matches!(log_z_ep(&st, &m), Err(Error::InvalidState(_))));
    }

    #[test]
    fn split_probit_matches_single_factor() {
        let base = QuadraticBase::kernel(DMatrix::identity(1, 1)).unwrap();
        let pk = SiteKind::Probit { y: 1.0, m: 0.0, v: 1.0 };
        let half = Model::with_sites(base.clone(), vec![Site::with_power(pk, 0, 0.5); 2]).unwrap();
        let whole = Model::new(base, vec![pk]).unwrap();
        let a = ep_solve(&half, &EpConfig::gp()).unwrap();
        let b = ep_solve(&whole, &EpConfig::gp()).unwrap();
        assert!(a.converged && b.converged);
        assert_relative_eq!(a.mu[0], b.mu[0], epsilon = 1e-10);
        assert_relative_eq!(a.sigma[(0, 0)], b.sigma[(0, 0)], epsilon = 1e-10);
        assert_relative_eq!(log_z_ep(&a, &half).unwrap(), 0.5f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn cavity_roundtrip() {
        let m = pair(0.4);
        let st = ep_solve(&m, &EpConfig::ising()).unwrap();
        let (g, l) = cavity(&st, &m, 0).unwrap();
        assert_relative_eq!(l + st.site_lambda[0], 1.0 / st.sigma[(0, 0)], epsilon = 1e-12);
        assert_relative_eq!(g + st.site_gamma[0], st.mu[0] / st.sigma[(0, 0)], epsilon = 1e-12);
        // single variable with a N(0,1) prior and a zero site
        let base = QuadraticBase::kernel(DMatrix::identity(1, 1)).unwrap();
        let m1 = Model::new(base, vec![SiteKind::BoxCentered { a: 1.0 }]).unwrap();
        let st1 = GaussianState {
            mu: DVector::zeros(1),
            sigma: DMatrix::identity(1, 1),
            site_gamma: vec![0.0],
            site_lambda: vec![0.0],
            site_log_z: vec![0.0],
            converged: true,
            residual: 0.0,
            sweeps: 0,
        };
        assert_eq!(cavity(&st1, &m1, 0).unwrap(), (0.0, 1.0));
    }
}
