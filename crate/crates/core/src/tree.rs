//! Tree-structured EC for Ising models.
//!
//! Every coupling on a spanning tree gets a bivariate Gaussian factor that
//! treats `t_m t_n` jointly; node factors carry the power 1 − d_n so that each
//! spin term keeps a total exponent of one.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::ep::{EpConfig, GaussianState};
use crate::error::{invalid, Error, Result};
use crate::model::Model;
use crate::special::{ln_2pi, log_sum_exp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    FullyFactorized,
    Tree,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    /// (variable, power)
    pub nodes: Vec<(usize, f64)>,
    /// ((m, n) with m < n, power)
    pub edges: Vec<((usize, usize), f64)>,
    pub kind: StructureKind,
}

impl Factorization {
    pub fn fully_factorized(n: usize) -> Self {
        Factorization { nodes: (0..n).map(|i| (i, 1.0)).collect(), edges: vec![], kind: StructureKind::FullyFactorized }
    }

    /// Tree (or forest) factorization over the given edges; node powers 1 − degree.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut parent: Vec<usize> = (0..n).collect();
        let mut degree = vec![0usize; n];
        let mut out = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n || a == b {
                return Err(invalid(format!("bad edge ({a}, {b}) for {n} variables")));
            }
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return Err(invalid(format!("edge ({a}, {b}) closes a cycle")));
            }
            parent[ra] = rb;
            degree[a] += 1;
            degree[b] += 1;
            out.push(((a.min(b), a.max(b)), 1.0));
        }
        Ok(Factorization {
            nodes: (0..n).map(|i| (i, 1.0 - degree[i] as f64)).collect(),
            edges: out,
            kind: StructureKind::Tree,
        })
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|((a, b), _)| *a == v || *b == v).count()
    }

    /// Total exponent with which each variable's site term enters the factorization.
    pub fn exponents(&self, n: usize) -> Vec<f64> {
        let mut e = vec![0.0; n];
        for &(v, d) in &self.nodes {
            e[v] += d;
        }
        for &((a, b), d) in &self.edges {
            e[a] += d;
            e[b] += d;
        }
        e
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Maximum-|J| spanning tree (a forest if the coupling graph is disconnected).
/// Equal weights are taken in lexicographic (m, n) order.
pub fn build_spanning_tree(j: &DMatrix<f64>) -> Factorization {
    let n = j.nrows();
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            let w = j[(a, b)].abs().max(j[(b, a)].abs());
            if w > 0.0 {
                cand.push((w, a, b));
            }
        }
    }
    // stable sort keeps the (m, n) order among ties
    cand.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut parent: Vec<usize> = (0..n).collect();
    let mut chosen = Vec::new();
    for (_, a, b) in cand {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            chosen.push((a, b));
        }
    }
    Factorization::from_edges(n, &chosen).expect("kruskal never closes a cycle")
}

/// Tilted distribution of an edge factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeTiltedSummary {
    /// log Z_τ = log ∫ q(x) t_m t_n / g_τ dx.
    pub log_z: f64,
    /// [p(−,−), p(−,+), p(+,−), p(+,+)]
    pub probs: [f64; 4],
    pub mean: [f64; 2],
    /// 2×2 covariance, row-major.
    pub cov: [f64; 4],
}

/// Bivariate Gaussian edge parameters: g_τ = exp(γᵀx − ½ xᵀΛx) on (x_m, x_n).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSite {
    pub gamma: Vector2<f64>,
    pub lambda: Matrix2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeState {
    /// q together with the node parameters (indexed like `Factorization::nodes`).
    pub state: GaussianState,
    pub edges: Vec<EdgeSite>,
    pub edge_tilted: Vec<EdgeTiltedSummary>,
    /// Σ over factors and their variables of (tilted mean − q mean)².
    pub consistency: f64,
}

pub const CONSISTENCY_TOL: f64 = 1e-20;

const STATES: [(f64, f64); 4] = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)];

fn edge_tilt(hc: &Vector2<f64>, lc: &Matrix2<f64>) -> ([f64; 4], f64) {
    let lw: Vec<f64> = STATES
        .iter()
        .map(|&(a, b)| {
            let x = Vector2::new(a, b);
            hc.dot(&x) - 0.5 * x.dot(&(lc * x))
        })
        .collect();
    let lse = log_sum_exp(&lw);
    let p = [(lw[0] - lse).exp(), (lw[1] - lse).exp(), (lw[2] - lse).exp(), (lw[3] - lse).exp()];
    (p, lse - 4f64.ln())
}

fn table_moments(p: &[f64; 4]) -> (Vector2<f64>, Matrix2<f64>) {
    let m1 = p[2] + p[3] - p[0] - p[1];
    let m2 = p[1] + p[3] - p[0] - p[2];
    let e12 = p[0] + p[3] - p[1] - p[2];
    let c = e12 - m1 * m2;
    (Vector2::new(m1, m2), Matrix2::new(1.0 - m1 * m1, c, c, 1.0 - m2 * m2))
}

fn block(sigma: &DMatrix<f64>, mu: &DVector<f64>, (a, b): (usize, usize)) -> (Vector2<f64>, Matrix2<f64>) {
    (Vector2::new(mu[a], mu[b]), Matrix2::new(sigma[(a, a)], sigma[(a, b)], sigma[(b, a)], sigma[(b, b)]))
}

fn is_pd(m: &Matrix2<f64>) -> bool {
    m[(0, 0)] > 0.0 && m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] > 0.0
}

struct Params {
    node_gamma: Vec<f64>,
    node_lambda: Vec<f64>,
    edges: Vec<EdgeSite>,
}

fn precision(model: &Model, fact: &Factorization, p: &Params) -> (DMatrix<f64>, DVector<f64>) {
    let (j, theta) = model.couplings().expect("checked by caller");
    let mut prec = -j.clone();
    let mut h = theta.clone();
    for (k, &(v, d)) in fact.nodes.iter().enumerate() {
        prec[(v, v)] += d * p.node_lambda[k];
        h[v] += d * p.node_gamma[k];
    }
    for (e, &((a, b), _)) in fact.edges.iter().enumerate() {
        let s = &p.edges[e];
        prec[(a, a)] += s.lambda[(0, 0)];
        prec[(a, b)] += s.lambda[(0, 1)];
        prec[(b, a)] += s.lambda[(1, 0)];
        prec[(b, b)] += s.lambda[(1, 1)];
        h[a] += s.gamma[0];
        h[b] += s.gamma[1];
    }
    (prec, h)
}

/// Mean, covariance and log Z_q.
fn gaussian(model: &Model, fact: &Factorization, p: &Params) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let (prec, h) = precision(model, fact, p);
    let chol =
        prec.cholesky().ok_or_else(|| Error::InvalidState("tree q has an indefinite precision matrix".into()))?;
    let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let sigma = chol.inverse();
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let mu = &sigma * &h;
    let log_zq = 0.5 * h.len() as f64 * ln_2pi() - 0.5 * logdet + 0.5 * h.dot(&mu);
    Ok((mu, sigma, log_zq))
}

fn edge_cavity(
    mu_t: &Vector2<f64>,
    s_t: &Matrix2<f64>,
    site: &EdgeSite,
) -> Result<(Vector2<f64>, Matrix2<f64>, Matrix2<f64>)> {
    let sinv = s_t.try_inverse().ok_or_else(|| Error::InvalidState("singular pairwise marginal".into()))?;
    Ok((sinv * mu_t - site.gamma, sinv - site.lambda, sinv))
}

fn node_cavity(mu: &DVector<f64>, sigma: &DMatrix<f64>, v: usize, g: f64, l: f64) -> (f64, f64) {
    let s = sigma[(v, v)];
    (mu[v] / s - g, 1.0 / s - l)
}

/// Factors whose parameters actually enter q: all edges and nodes with nonzero power.
fn active_nodes(fact: &Factorization) -> impl Iterator<Item = (usize, (usize, f64))> + '_ {
    fact.nodes.iter().copied().enumerate().filter(|(_, (_, d))| *d != 0.0)
}

struct Residuals {
    moments: f64,
    consistency: f64,
}

fn residuals(
    model: &Model,
    fact: &Factorization,
    p: &Params,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> Result<Residuals> {
    let mut worst: f64 = 0.0;
    let mut cons = 0.0;
    for (e, &(pair, _)) in fact.edges.iter().enumerate() {
        let (mu_t, s_t) = block(sigma, mu, pair);
        let (hc, lc, _) = edge_cavity(&mu_t, &s_t, &p.edges[e])?;
        let (probs, _) = edge_tilt(&hc, &lc);
        let (m, c) = table_moments(&probs);
        worst = worst.max((m - mu_t).amax()).max((c - s_t).amax());
        cons += (m - mu_t).norm_squared();
    }
    for (k, (v, _)) in active_nodes(fact) {
        let (gc, lc) = node_cavity(mu, sigma, v, p.node_gamma[k], p.node_lambda[k]);
        let t = model.sites[v].kind.tilted(gc, lc)?;
        worst = worst.max((t.mean - mu[v]).abs()).max((t.variance - sigma[(v, v)]).abs());
        cons += (t.mean - mu[v]).powi(2);
    }
    Ok(Residuals { moments: worst, consistency: cons })
}

fn check_inputs(model: &Model, fact: &Factorization) -> Result<()> {
    if !model.is_ising() {
        return Err(invalid("tree EC is only implemented for Ising models"));
    }
    let n = model.dim();
    if model.sites.len() != n || model.sites.iter().enumerate().any(|(i, s)| s.var != i || s.power != 1.0) {
        return Err(invalid("tree EC expects one unit-power spin site per variable"));
    }
    if fact.nodes.len() != n || fact.nodes.iter().enumerate().any(|(i, &(v, _))| v != i) {
        return Err(invalid("factorization must list every variable once, in order"));
    }
    if fact.exponents(n).iter().any(|e| (e - 1.0).abs() > 1e-12) {
        return Err(invalid("factorization does not conserve site exponents"));
    }
    Ok(())
}

/// Run tree EC to a fixed point. Non-convergence is reported through `converged`.
pub fn ep_tree_solve(model: &Model, fact: &Factorization, config: &EpConfig) -> Result<TreeState> {
    config.validate()?;
    check_inputs(model, fact)?;
    let (j, _) = model.couplings().expect("ising model");
    let top = j.clone().symmetric_eigen().eigenvalues.max();
    let target = 1.0 + top.max(0.0);
    let mut p = Params {
        node_gamma: vec![0.0; fact.nodes.len()],
        node_lambda: vec![target; fact.nodes.len()],
        edges: vec![
            EdgeSite { gamma: Vector2::zeros(), lambda: Matrix2::from_diagonal_element(target) };
            fact.edges.len()
        ],
    };
    let (mut mu, mut sigma, _) = gaussian(model, fact, &p)?;
    let mut failures = 0usize;
    let mut res = Residuals { moments: f64::INFINITY, consistency: f64::INFINITY };
    let mut sweeps = 0;
    let n_nodes = fact.nodes.len();
    while sweeps < config.max_sweeps {
        for e in 0..fact.edges.len() {
            let ok = update_edge(fact, config, e, &mut mu, &mut sigma, &mut p)?;
            failures = if ok { 0 } else { failures + 1 };
            if failures >= 3 {
                return Err(Error::CavityCollapse { site: n_nodes + e, precision: f64::NAN });
            }
        }
        let nodes: Vec<(usize, (usize, f64))> = active_nodes(fact).collect();
        for (k, (v, d)) in nodes {
            let ok = update_node(config, k, v, d, &mut mu, &mut sigma, &mut p)?;
            failures = if ok { 0 } else { failures + 1 };
            if failures >= 3 {
                let (_, lc) = node_cavity(&mu, &sigma, v, p.node_gamma[k], p.node_lambda[k]);
                return Err(Error::CavityCollapse { site: k, precision: lc });
            }
        }
        sweeps += 1;
        let fresh = gaussian(model, fact, &p)?;
        mu = fresh.0;
        sigma = fresh.1;
        res = residuals(model, fact, &p, &mu, &sigma)?;
        if res.moments <= config.tol && res.consistency <= CONSISTENCY_TOL {
            break;
        }
    }
    let converged = res.moments <= config.tol && res.consistency <= CONSISTENCY_TOL;
    let (node_log_z, edge_tilted) = factor_log_zs(model, fact, &p, &mu, &sigma)?;
    Ok(TreeState {
        state: GaussianState {
            mu,
            sigma,
            site_gamma: p.node_gamma,
            site_lambda: p.node_lambda,
            site_log_z: node_log_z,
            converged,
            residual: res.moments,
            sweeps,
        },
        edges: p.edges,
        edge_tilted,
        consistency: res.consistency,
    })
}

fn update_edge(
    fact: &Factorization,
    config: &EpConfig,
    e: usize,
    mu: &mut DVector<f64>,
    sigma: &mut DMatrix<f64>,
    p: &mut Params,
) -> Result<bool> {
    let pair = fact.edges[e].0;
    let (mu_t, s_t) = block(sigma, mu, pair);
    let (hc, lc, sinv) = edge_cavity(&mu_t, &s_t, &p.edges[e])?;
    let (probs, _) = edge_tilt(&hc, &lc);
    let (m, c) = table_moments(&probs);
    let cinv = c.try_inverse().filter(|_| is_pd(&c)).ok_or_else(|| Error::DivergedSite {
        site: fact.nodes.len() + e,
        reason: "edge tilted covariance is singular".into(),
    })?;
    let new_l = cinv - lc;
    let new_g = cinv * m - hc;
    let mut step = 1.0 - config.damping;
    for _ in 0..6 {
        let dl = (new_l - p.edges[e].lambda) * step;
        let dg = (new_g - p.edges[e].gamma) * step;
        if is_pd(&(sinv + dl)) {
            let a = Matrix2::identity() + dl * s_t;
            let ainv = a.try_inverse().ok_or_else(|| Error::InvalidState("singular edge update".into()))?;
            let shift = ainv * (dg - dl * mu_t);
            let b = ainv * dl;
            let b = (b + b.transpose()) * 0.5;
            let (i, k) = pair;
            let cols = DMatrix::from_columns(&[sigma.column(i).clone_owned(), sigma.column(k).clone_owned()]);
            let bb = DMatrix::from_row_slice(2, 2, b.as_slice());
            *mu += &cols * DVector::from_column_slice(shift.as_slice());
            *sigma -= &cols * bb * cols.transpose();
            p.edges[e].lambda += dl;
            p.edges[e].gamma += dg;
            return Ok(true);
        }
        step *= 0.5;
    }
    Ok(false)
}

/// Cavity field u that solves the spin node's matching condition
/// D u + (1 − D) sinh(2u) / 2 = s, whose left side increases with u for D ≤ 1.
fn node_root(d: f64, s: f64) -> Option<f64> {
    let phi = |u: f64| d * u + 0.5 * (1.0 - d) * (2.0 * u).sinh() - s;
    let (mut lo, mut hi) = (-1.0, 1.0);
    while phi(lo) > 0.0 {
        lo *= 2.0;
        if lo < -300.0 {
            return None;
        }
    }
    while phi(hi) < 0.0 {
        hi *= 2.0;
        if hi > 300.0 {
            return None;
        }
    }
    let mut u = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = phi(u);
        if f == 0.0 {
            break;
        }
        if f < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let newton = u - f / (d + (1.0 - d) * (2.0 * u).cosh());
        u = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 * (1.0 + u.abs()) {
            break;
        }
    }
    Some(u)
}

/// Damped node refit. The spin node's matching problem is solved exactly in its
/// cavity field, which stays stable for the negative powers of inner tree nodes.
#[allow(clippy::too_many_arguments)]
fn update_node(
    config: &EpConfig,
    k: usize,
    v: usize,
    d: f64,
    mu: &mut DVector<f64>,
    sigma: &mut DMatrix<f64>,
    p: &mut Params,
) -> Result<bool> {
    let s_vv = sigma[(v, v)];
    let rest_l = 1.0 / s_vv - d * p.node_lambda[k];
    let rest_g = mu[v] / s_vv - d * p.node_gamma[k];
    let u = node_root(d, rest_g)
        .ok_or_else(|| Error::DivergedSite { site: k, reason: format!("spin node cannot match field {rest_g}") })?;
    let new_g = (0.5 * (2.0 * u).sinh() - rest_g) / d;
    let new_l = (u.cosh().powi(2) - rest_l) / d;
    let mut step = 1.0 - config.damping;
    for _ in 0..6 {
        let dl = step * (new_l - p.node_lambda[k]);
        let dg = step * (new_g - p.node_gamma[k]);
        let dt = d * dl;
        let denom = 1.0 + dt * s_vv;
        if denom > 1e-10 {
            let col = sigma.column(v).clone_owned();
            mu.axpy((d * dg - dt * mu[v]) / denom, &col, 1.0);
            sigma.ger(-dt / denom, &col, &col, 1.0);
            p.node_lambda[k] += dl;
            p.node_gamma[k] += dg;
            return Ok(true);
        }
        step *= 0.5;
    }
    Ok(false)
}

fn factor_log_zs(
    model: &Model,
    fact: &Factorization,
    p: &Params,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> Result<(Vec<f64>, Vec<EdgeTiltedSummary>)> {
    let mut edges = Vec::with_capacity(fact.edges.len());
    for (e, &(pair, _)) in fact.edges.iter().enumerate() {
        let (mu_t, s_t) = block(sigma, mu, pair);
        let (hc, lc, sinv) = edge_cavity(&mu_t, &s_t, &p.edges[e])?;
        let (probs, log_tilt) = edge_tilt(&hc, &lc);
        let (m, c) = table_moments(&probs);
        let log_z = log_tilt - 0.5 * mu_t.dot(&(sinv * mu_t)) - 0.5 * (2.0 * ln_2pi() + s_t.determinant().ln());
        edges.push(EdgeTiltedSummary {
            log_z,
            probs,
            mean: [m[0], m[1]],
            cov: [c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]],
        });
    }
    let mut nodes = vec![0.0; fact.nodes.len()];
    for (k, &(v, d)) in fact.nodes.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let (gc, lc) = node_cavity(mu, sigma, v, p.node_gamma[k], p.node_lambda[k]);
        let t = model.sites[v].kind.tilted(gc, lc)?;
        let s = sigma[(v, v)];
        nodes[k] = t.log_z - 0.5 * mu[v] * mu[v] / s - 0.5 * (ln_2pi() + s.ln());
    }
    Ok((nodes, edges))
}

/// log Z_q + Σ_τ log Z_τ + Σ_n (1 − d_n) log Z_n of a converged tree state.
pub fn log_z_ep_tree(ts: &TreeState, model: &Model, fact: &Factorization) -> Result<f64> {
    if !ts.state.converged {
        return Err(Error::InvalidState(format!(
            "tree EC did not converge (residual {:e}, consistency {:e})",
            ts.state.residual, ts.consistency
        )));
    }
    check_inputs(model, fact)?;
    let p = Params {
        node_gamma: ts.state.site_gamma.clone(),
        node_lambda: ts.state.site_lambda.clone(),
        edges: ts.edges.clone(),
    };
    let (mu, sigma, log_zq) = gaussian(model, fact, &p)?;
    let (nodes, edges) = factor_log_zs(model, fact, &p, &mu, &sigma)?;
    let node_sum: f64 = fact.nodes.iter().zip(&nodes).map(|(&(_, d), z)| d * z).sum();
    Ok(log_zq + edges.iter().map(|e| e.log_z).sum::<f64>() + node_sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ep::{ep_solve, log_z_ep};
    use crate::oracle::ising_exhaustive;
    use approx::assert_relative_eq;

    fn sym(n: usize, entries: &[(usize, usize, f64)]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(n, n);
        for &(a, b, v) in entries {
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
        j
    }

    #[test]
    fn spanning_tree_shapes() {
        let f = build_spanning_tree(&sym(2, &[(0, 1, 0.3)]));
        assert_eq!(f.edges.len(), 1);
        assert_eq!(f.nodes, vec![(0, 0.0), (1, 0.0)]);
        let star = sym(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]);
        let f = build_spanning_tree(&star);
        assert_eq!(f.nodes[0].1, -2.0);
        assert!(f.exponents(4).iter().all(|&e| e == 1.0));
        // triangle with a tie: the lexicographically first equal edge wins
        let tri = sym(3, &[(0, 1, 0.5), (0, 2, 0.5), (1, 2, 0.5)]);
        assert_eq!(build_spanning_tree(&tri).edges.iter().map(|e| e.0).collect::<Vec<_>>(), vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn single_edge_is_exact() {
        for &jv in &[0.2, 0.7, 1.5] {
            let j = sym(2, &[(0, 1, jv)]);
            let m = Model::ising(j.clone(), DVector::from_vec(vec![0.1, -0.3])).unwrap();
            let f = build_spanning_tree(&j);
            let ts = ep_tree_solve(&m, &f, &EpConfig::ising()).unwrap();
            let exact = ising_exhaustive(&j, &DVector::from_vec(vec![0.1, -0.3])).unwrap();
            assert_relative_eq!(log_z_ep_tree(&ts, &m, &f).unwrap(), exact.log_z, epsilon = 1e-10);
            assert_relative_eq!(ts.state.mu[0], exact.means[0], epsilon = 1e-10);
        }
    }

    #[test]
    fn chain_matches_enumeration() {
        let j = sym(3, &[(0, 1, 0.6), (1, 2, -0.4)]);
        let th = DVector::from_vec(vec![0.2, 0.0, -0.1]);
        let m = Model::ising(j.clone(), th.clone()).unwrap();
        let f = build_spanning_tree(&j);
        let ts = ep_tree_solve(&m, &f, &EpConfig::ising()).unwrap();
        assert!(ts.state.converged);
        let exact = ising_exhaustive(&j, &th).unwrap();
        for i in 0..3 {
            assert_relative_eq!(ts.state.mu[i], exact.means[i], epsilon = 1e-8);
        }
        assert_relative_eq!(log_z_ep_tree(&ts, &m, &f).unwrap(), exact.log_z, epsilon = 1e-8);
    }

    #[test]
    fn decoupled_tree_equals_factorized() {
        let th = DVector::from_vec(vec![0.3, -0.2, 0.5]);
        let m = Model::ising(DMatrix::zeros(3, 3), th).unwrap();
        let f = Factorization::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let ts = ep_tree_solve(&m, &f, &EpConfig::ising()).unwrap();
        let fac = ep_solve(&m, &EpConfig::ising()).unwrap();
        assert_relative_eq!(log_z_ep_tree(&ts, &m, &f).unwrap(), log_z_ep(&fac, &m).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn node_root_solves_matching() {
        for &(d, s) in &[(1.0, 0.7), (0.0, -2.0), (-1.0, 0.3), (-3.0, 5.0), (0.5, -0.1)] {
            let u = node_root(d, s).unwrap();
            assert_relative_eq!(d * u + 0.5 * (1.0 - d) * (2.0 * u).sinh(), s, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_cycles_and_bad_models() {
        assert!(Factorization::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).is_err());
        let f =
            Factorization { nodes: vec![(0, 1.0), (1, 1.0)], edges: vec![((0, 1), 1.0)], kind: StructureKind::Tree };
        let m = Model::ising(sym(2, &[(0, 1, 0.1)]), DVector::zeros(2)).unwrap();
        assert!(ep_tree_solve(&m, &f, &EpConfig::ising()).is_err());
    }
}
