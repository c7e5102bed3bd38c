//! Cumulant corrections to EP/EC: second-order log R for factorized and tree
//! approximations, marginal mean and covariance corrections, the ε-expansion
//! for spins, and convergence-radius diagnostics.
//!
//! Relations between the auxiliary k-variables of two different factors are
//! ⟨k_a k_bᵀ⟩ = −Σ_a⁻¹ Σ_ab Σ_b⁻¹; a factor's relation with itself is zero.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::Serialize;

use crate::cumulants::{ising_edge_cumulants, ising_site_cumulants, CumulantTable, EdgeCumulants, MAX_EDGE_ORDER};
use crate::ep::{self, GaussianState};
use crate::error::{invalid, Error, Result};
use crate::model::Model;
use crate::special::{factorial, log_sum_exp};
use crate::tree::{Factorization, TreeState};

pub const DEFAULT_ORDERS: [usize; 2] = [3, 4];

/// ⟨k_m k_n⟩ = −Σ_mn / (Σ_mm Σ_nn) off the diagonal, zero on it.
pub fn relation_matrix(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let n = sigma.nrows();
    DMatrix::from_fn(n, n, |m, k| if m == k { 0.0 } else { -sigma[(m, k)] / (sigma[(m, m)] * sigma[(k, k)]) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairContribution {
    pub a: usize,
    pub b: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Eigenvalues γ_i of D^{-1/2} Σ D^{-1/2}, ascending.
    pub eigenvalues: Vec<f64>,
    /// min_i 1/|1 − γ_i|
    pub radius: f64,
    /// all 0 < γ_i < 2
    pub within_radius: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionReport {
    pub log_r: f64,
    /// Contribution of each cumulant order l; sums to `log_r`.
    pub by_order: BTreeMap<usize, f64>,
    /// Largest pair contributions by magnitude (pair counted once, both orders included).
    pub top_pairs: Vec<PairContribution>,
    pub diagnostics: Diagnostics,
}

const TOP_PAIRS: usize = 10;

fn check_orders(orders: &[usize], lo: usize, hi: usize) -> Result<()> {
    if orders.is_empty() {
        return Err(invalid("at least one cumulant order is required"));
    }
    if let Some(&l) = orders.iter().find(|&&l| l < lo || l > hi) {
        return Err(Error::UnsupportedOrder { order: l, kind: format!("correction (orders {lo}..={hi})") });
    }
    Ok(())
}

/// Eigenvalues of the diagonally rescaled covariance and the implied radius.
pub fn convergence_diagnostics(sigma: &DMatrix<f64>) -> Diagnostics {
    let n = sigma.nrows();
    let d: Vec<f64> = (0..n).map(|i| sigma[(i, i)].sqrt().recip()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| sigma[(i, j)] * d[i] * d[j]);
    let mut eigenvalues: Vec<f64> = scaled.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let radius = eigenvalues.iter().map(|g| 1.0 / (1.0 - g).abs()).fold(f64::INFINITY, f64::min);
    let within_radius = eigenvalues.iter().all(|&g| g > 0.0 && g < 2.0);
    Diagnostics { eigenvalues, radius, within_radius }
}

fn top_pairs(mut pairs: Vec<PairContribution>) -> Vec<PairContribution> {
    pairs.sort_by(|x, y| y.value.abs().total_cmp(&x.value.abs()).then((x.a, x.b).cmp(&(y.a, y.b))));
    pairs.truncate(TOP_PAIRS);
    pairs
}

/// Second-order log R for a fully factorized approximation with site powers.
///
/// log R ≈ ½ Σ_{a≠b} D_a D_b E_ab + ½ Σ_a D_a (D_a − 1) E_aa with
/// E_ab = Σ_l c_la c_lb ρ_ab^l / l!, ρ_ab = Σ_vw / (Σ_vv Σ_ww) for the sites' variables.
/// The second sum pairs a site with its own extra copies and vanishes for unit powers.
pub fn log_r_factorized(
    state: &GaussianState,
    model: &Model,
    tables: &[CumulantTable],
    orders: &[usize],
) -> Result<CorrectionReport> {
    if !state.converged {
        return Err(Error::InvalidState("corrections need a converged EP state".into()));
    }
    if tables.len() != model.sites.len() {
        return Err(invalid("one cumulant table per site is required"));
    }
    check_orders(orders, 3, 6)?;
    let sig = &state.sigma;
    let mut by_order: BTreeMap<usize, f64> = orders.iter().map(|&l| (l, 0.0)).collect();
    let mut pairs = Vec::new();
    let n_sites = model.sites.len();
    for a in 0..n_sites {
        let (va, da) = (model.sites[a].var, model.sites[a].power);
        for b in a..n_sites {
            let (vb, db) = (model.sites[b].var, model.sites[b].power);
            let weight = if a == b { 0.5 * da * (da - 1.0) } else { da * db };
            if weight == 0.0 {
                continue;
            }
            let rho = sig[(va, vb)] / (sig[(va, va)] * sig[(vb, vb)]);
            let mut pair_total = 0.0;
            for &l in orders {
                let term = weight * tables[a].get(l)? * tables[b].get(l)? * rho.powi(l as i32) / factorial(l);
                *by_order.get_mut(&l).unwrap() += term;
                pair_total += term;
            }
            pairs.push(PairContribution { a, b, value: pair_total });
        }
    }
    Ok(CorrectionReport {
        log_r: by_order.values().sum(),
        by_order,
        top_pairs: top_pairs(pairs),
        diagnostics: convergence_diagnostics(sig),
    })
}

/// Cumulant tables at a solved state, with `log_r_factorized` on top.
pub fn factorized_correction(state: &GaussianState, model: &Model, orders: &[usize]) -> Result<CorrectionReport> {
    let tables = ep::site_cumulants(state, model)?;
    log_r_factorized(state, model, &tables, orders)
}

fn require_plain(model: &Model, tables: &[CumulantTable], sigma: &DMatrix<f64>) -> Result<()> {
    if !model.is_plain() {
        return Err(invalid("marginal corrections need one unit-power site per variable"));
    }
    if tables.len() != sigma.nrows() {
        return Err(invalid("one cumulant table per variable is required"));
    }
    Ok(())
}

/// Correction to ⟨x_*⟩ for a quantity with covariance `cov_row[j] = Σ_{*j}` to
/// the model variables: Σ_l Σ_{j≠n} (Σ_*j/Σ_jj) c_{l+1,j} c_{l,n} ρ_jn^l / l!.
pub fn mean_correction_for(
    cov_row: &[f64],
    sigma: &DMatrix<f64>,
    tables: &[CumulantTable],
    orders: &[usize],
) -> Result<f64> {
    check_orders(orders, 2, 5)?;
    let n = sigma.nrows();
    if cov_row.len() != n || tables.len() != n {
        return Err(invalid("covariance row and tables must match the model size"));
    }
    let mut total = 0.0;
    for j in 0..n {
        let sjj = sigma[(j, j)];
        let lead = cov_row[j] / sjj;
        if lead == 0.0 {
            continue;
        }
        for k in 0..n {
            if k == j {
                continue;
            }
            let rho = sigma[(j, k)] / (sjj * sigma[(k, k)]);
            for &l in orders {
                total += lead * tables[j].get(l + 1)? * tables[k].get(l)? * rho.powi(l as i32) / factorial(l);
            }
        }
    }
    Ok(total)
}

/// Additive correction to the mean of variable `i`.
pub fn marginal_mean_correction(
    state: &GaussianState,
    model: &Model,
    tables: &[CumulantTable],
    i: usize,
    orders: &[usize],
) -> Result<f64> {
    require_plain(model, tables, &state.sigma)?;
    if i >= state.dim() {
        return Err(invalid(format!("no variable {i}")));
    }
    let row: Vec<f64> = state.sigma.row(i).iter().copied().collect();
    mean_correction_for(&row, &state.sigma, tables, orders)
}

/// Correction to Cov(x_*, x_⋆) given both quantities' covariance rows; the
/// two sums take their own order lists:
/// Σ_{j≠n} [ (Σ_*j Σ_⋆j/Σ_jj²) c_{l+2,j} c_{l,n} ρ^l / l!
///             + (Σ_*j/Σ_jj)(Σ_⋆n/Σ_nn) c_{l,j} c_{l,n} ρ^{l−1} / (l−1)! ].
pub fn cov_correction_for(
    row_a: &[f64],
    row_b: &[f64],
    sigma: &DMatrix<f64>,
    tables: &[CumulantTable],
    first_orders: &[usize],
    second_orders: &[usize],
) -> Result<f64> {
    check_orders(first_orders, 2, 4)?;
    check_orders(second_orders, 2, 6)?;
    let n = sigma.nrows();
    if row_a.len() != n || row_b.len() != n || tables.len() != n {
        return Err(invalid("covariance rows and tables must match the model size"));
    }
    let mut total = 0.0;
    for j in 0..n {
        let sjj = sigma[(j, j)];
        for k in 0..n {
            if k == j {
                continue;
            }
            let skk = sigma[(k, k)];
            let rho = sigma[(j, k)] / (sjj * skk);
            let both = row_a[j] * row_b[j] / (sjj * sjj);
            if both != 0.0 {
                for &l in first_orders {
                    total += both * tables[j].get(l + 2)? * tables[k].get(l)? * rho.powi(l as i32) / factorial(l);
                }
            }
            let cross = (row_a[j] / sjj) * (row_b[k] / skk);
            if cross != 0.0 {
                for &l in second_orders {
                    total += cross * tables[j].get(l)? * tables[k].get(l)? * rho.powi(l as i32 - 1) / factorial(l - 1);
                }
            }
        }
    }
    Ok(total)
}

/// Additive correction to Σ_{i i'}.
pub fn marginal_cov_correction(
    state: &GaussianState,
    model: &Model,
    tables: &[CumulantTable],
    i: usize,
    ip: usize,
    first_orders: &[usize],
    second_orders: &[usize],
) -> Result<f64> {
    require_plain(model, tables, &state.sigma)?;
    if i >= state.dim() || ip >= state.dim() {
        return Err(invalid("variable index out of range"));
    }
    let ra: Vec<f64> = state.sigma.row(i).iter().copied().collect();
    let rb: Vec<f64> = state.sigma.row(ip).iter().copied().collect();
    cov_correction_for(&ra, &rb, &state.sigma, tables, first_orders, second_orders)
}

/// Corrected means μ_i + δμ_i for every variable.
pub fn corrected_means(state: &GaussianState, model: &Model, orders: &[usize]) -> Result<DVector<f64>> {
    let tables = ep::site_cumulants(state, model)?;
    let mut out = state.mu.clone();
    for i in 0..state.dim() {
        out[i] += marginal_mean_correction(state, model, &tables, i, orders)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// pairing sums for multivariate factors

/// Σ over nonnegative integer matrices β with row sums `alpha` and column sums
/// `alpha_p` of ∏ r_ij^β_ij / β_ij!. This is the number-weighted sum over all
/// Wick pairings between the two factors' k-symbols, divided by α! α'!.
pub fn pairing_sum(alpha: &[usize], alpha_p: &[usize], rel: &[Vec<f64>]) -> Result<f64> {
    if alpha.iter().sum::<usize>() != alpha_p.iter().sum::<usize>() {
        return Ok(0.0);
    }
    if rel.len() != alpha.len() || rel.iter().any(|row| row.len() != alpha_p.len()) {
        return Err(invalid("relation block does not match the index lengths"));
    }
    fn rec(i: usize, alpha: &[usize], cols: &mut Vec<usize>, rel: &[Vec<f64>], acc: f64) -> f64 {
        if i == alpha.len() {
            return if cols.iter().all(|&c| c == 0) { acc } else { 0.0 };
        }
        // distribute row i's alpha_i over the columns
        fn fill(
            i: usize,
            j: usize,
            left: usize,
            alpha: &[usize],
            cols: &mut Vec<usize>,
            rel: &[Vec<f64>],
            acc: f64,
        ) -> f64 {
            if j + 1 == cols.len() {
                if left > cols[j] {
                    return 0.0;
                }
                cols[j] -= left;
                let v = rec(i + 1, alpha, cols, rel, acc * rel[i][j].powi(left as i32) / factorial(left));
                cols[j] += left;
                return v;
            }
            let mut s = 0.0;
            for b in 0..=left.min(cols[j]) {
                cols[j] -= b;
                s += fill(i, j + 1, left - b, alpha, cols, rel, acc * rel[i][j].powi(b as i32) / factorial(b));
                cols[j] += b;
            }
            s
        }
        fill(i, 0, alpha[i], alpha, cols, rel, acc)
    }
    Ok(rec(0, alpha, &mut alpha_p.to_vec(), rel, 1.0))
}

/// (−1)^l Σ_{|α|=|α'|=l} c_ατ c_α'τ' Σ_β ∏ r^β/β! for two edge factors, with β
/// enumerated by its free entry β₁ ∈ [max(0, α₁+α₁'−l), min(α₁, α₁')].
pub fn edge_edge_expectation(ca: &EdgeCumulants, cb: &EdgeCumulants, rel: &[[f64; 2]; 2], l: usize) -> Result<f64> {
    if l > MAX_EDGE_ORDER {
        return Err(Error::UnsupportedOrder { order: l, kind: "ising edge".into() });
    }
    let mut total = 0.0;
    for a1 in 0..=l {
        let c_a = ca.get(a1, l - a1)?;
        for b1 in 0..=l {
            let c_b = cb.get(b1, l - b1)?;
            let lo = (a1 + b1).saturating_sub(l);
            let mut s = 0.0;
            for beta1 in lo..=a1.min(b1) {
                let beta = [beta1, a1 - beta1, b1 - beta1, l + beta1 - a1 - b1];
                let r = [rel[0][0], rel[0][1], rel[1][0], rel[1][1]];
                s += beta.iter().zip(r).map(|(&k, rv)| rv.powi(k as i32) / factorial(k)).product::<f64>();
            }
            total += c_a * c_b * s;
        }
    }
    Ok(if l.is_multiple_of(2) { total } else { -total })
}

/// A factor of the tree expansion: its variables and cumulants by multi-index.
enum Factor {
    Node { var: usize, table: CumulantTable },
    Edge { vars: (usize, usize), table: EdgeCumulants },
}

impl Factor {
    fn vars(&self) -> Vec<usize> {
        match self {
            Factor::Node { var, .. } => vec![*var],
            Factor::Edge { vars, .. } => vec![vars.0, vars.1],
        }
    }

    /// All (multi-index, cumulant) with total order l.
    fn cumulants(&self, l: usize) -> Result<Vec<(Vec<usize>, f64)>> {
        match self {
            Factor::Node { table, .. } => Ok(vec![(vec![l], table.get(l)?)]),
            Factor::Edge { table, .. } => (0..=l).map(|a| Ok((vec![a, l - a], table.get(a, l - a)?))).collect(),
        }
    }
}

fn block_inverse(sigma: &DMatrix<f64>, vars: &[usize]) -> Result<DMatrix<f64>> {
    let k = vars.len();
    DMatrix::from_fn(k, k, |i, j| sigma[(vars[i], vars[j])])
        .try_inverse()
        .ok_or_else(|| Error::InvalidState("singular factor covariance block".into()))
}

/// −Σ_a⁻¹ Σ_ab Σ_b⁻¹, with entries that vanish analytically (a node inside an
/// edge relates only through its own variable) set to exact zeros.
fn factor_relation(sigma: &DMatrix<f64>, a: &Factor, b: &Factor) -> Result<Vec<Vec<f64>>> {
    let (va, vb) = (a.vars(), b.vars());
    let shared = |x: &[usize], y: &[usize]| y.len() == 1 && x.contains(&y[0]);
    if shared(&va, &vb) || shared(&vb, &va) {
        let v = if vb.len() == 1 { vb[0] } else { va[0] };
        let s = -1.0 / sigma[(v, v)];
        return Ok(va.iter().map(|&x| vb.iter().map(|&y| if x == v && y == v { s } else { 0.0 }).collect()).collect());
    }
    let ia = block_inverse(sigma, &va)?;
    let ib = block_inverse(sigma, &vb)?;
    let cross = DMatrix::from_fn(va.len(), vb.len(), |i, j| sigma[(va[i], vb[j])]);
    let r = -(ia * cross * ib);
    Ok((0..va.len()).map(|i| (0..vb.len()).map(|j| r[(i, j)]).collect()).collect())
}

fn pair_expectation(a: &Factor, b: &Factor, rel: &[Vec<f64>], l: usize) -> Result<f64> {
    let mut total = 0.0;
    for (alpha, ca) in a.cumulants(l)? {
        for (alpha_p, cb) in b.cumulants(l)? {
            if ca == 0.0 || cb == 0.0 {
                continue;
            }
            total += ca * cb * pairing_sum(&alpha, &alpha_p, rel)?;
        }
    }
    Ok(if l.is_multiple_of(2) { total } else { -total })
}

/// Second-order log R of a tree EC solution, orders l ∈ `orders` ⊆ {3, 4}.
///
/// Sums run over edge–edge, node–node, and edge–node pairs with weights
/// D_a D_b, plus the node copy term ½ (1 − d_n)(−d_n) E_nn.
pub fn log_r_tree(ts: &TreeState, model: &Model, fact: &Factorization, orders: &[usize]) -> Result<CorrectionReport> {
    if !ts.state.converged {
        return Err(Error::InvalidState("corrections need a converged tree state".into()));
    }
    check_orders(orders, 3, MAX_EDGE_ORDER)?;
    if fact.edges.len() != ts.edge_tilted.len() || fact.nodes.len() != model.dim() {
        return Err(invalid("tree state does not belong to this factorization"));
    }
    let sig = &ts.state.sigma;
    let mut factors: Vec<(Factor, f64)> = Vec::new();
    for &(v, d) in &fact.nodes {
        if d != 0.0 {
            factors.push((Factor::Node { var: v, table: ising_site_cumulants(ts.state.mu[v])? }, d));
        }
    }
    for (e, &(pair, d)) in fact.edges.iter().enumerate() {
        factors.push((Factor::Edge { vars: pair, table: ising_edge_cumulants(&ts.edge_tilted[e].probs)? }, d));
    }
    let mut by_order: BTreeMap<usize, f64> = orders.iter().map(|&l| (l, 0.0)).collect();
    let mut pairs = Vec::new();
    for a in 0..factors.len() {
        for b in a..factors.len() {
            let (fa, da) = (&factors[a].0, factors[a].1);
            let (fb, db) = (&factors[b].0, factors[b].1);
            let weight = if a == b { 0.5 * da * (da - 1.0) } else { da * db };
            if weight == 0.0 {
                continue;
            }
            let rel = if a == b {
                // a node paired with its own copy relates through −1/Σ_nn
                let v = fa.vars()[0];
                vec![vec![-1.0 / sig[(v, v)]]]
            } else {
                factor_relation(sig, fa, fb)?
            };
            if rel.iter().flatten().all(|&r| r == 0.0) {
                continue;
            }
            let mut pair_total = 0.0;
            for &l in orders {
                let term = weight * pair_expectation(fa, fb, &rel, l)?;
                *by_order.get_mut(&l).unwrap() += term;
                pair_total += term;
            }
            pairs.push(PairContribution { a, b, value: pair_total });
        }
    }
    Ok(CorrectionReport {
        log_r: by_order.values().sum(),
        by_order,
        top_pairs: top_pairs(pairs),
        diagnostics: convergence_diagnostics(sig),
    })
}

// ---------------------------------------------------------------------------
// spin-specific expansions

fn tilted_means(state: &GaussianState, model: &Model) -> Result<Vec<f64>> {
    (0..model.sites.len())
        .map(|a| {
            let (g, l) = ep::cavity(state, model, a)?;
            Ok(model.sites[a].kind.tilted(g, l)?.mean)
        })
        .collect()
}

fn require_plain_ising(state: &GaussianState, model: &Model) -> Result<()> {
    if !model.is_ising() || !model.is_plain() {
        return Err(invalid("this expansion needs a fully factorized Ising model"));
    }
    if !state.converged {
        return Err(Error::InvalidState("expansion needs a converged EP state".into()));
    }
    Ok(())
}

/// log of R ≈ 1 + Σ_{m<n} (Σ_{x_m,x_n=±1} p_m(x_m) p_n(x_n) q(x_m,x_n)/(q(x_m) q(x_n)) − 1),
/// with p_n the tilted spin distributions and q the Gaussian's densities.
pub fn epsilon_expansion_log_r(state: &GaussianState, model: &Model) -> Result<f64> {
    require_plain_ising(state, model)?;
    let m = tilted_means(state, model)?;
    let (mu, sig) = (&state.mu, &state.sigma);
    let n = state.dim();
    let mut r = 1.0;
    for a in 0..n {
        for b in (a + 1)..n {
            let block = Matrix2::new(sig[(a, a)], sig[(a, b)], sig[(b, a)], sig[(b, b)]);
            let inv = block.try_inverse().ok_or_else(|| Error::InvalidState("singular pair covariance".into()))?;
            let log_det = block.determinant().ln();
            let mut s = 0.0;
            for &xa in &[-1.0, 1.0] {
                for &xb in &[-1.0, 1.0] {
                    let d = nalgebra::Vector2::new(xa - mu[a], xb - mu[b]);
                    let log_joint = -0.5 * d.dot(&(inv * d)) - 0.5 * log_det;
                    let log_marg = -0.5 * d[0] * d[0] / sig[(a, a)]
                        - 0.5 * d[1] * d[1] / sig[(b, b)]
                        - 0.5 * (sig[(a, a)] * sig[(b, b)]).ln();
                    s += 0.25 * (1.0 + xa * m[a]) * (1.0 + xb * m[b]) * (log_joint - log_marg).exp();
                }
            }
            r += s - 1.0;
        }
    }
    if !(r > 0.0) {
        return Err(Error::ExpansionBreakdown { value: r });
    }
    Ok(r.ln())
}

/// log R(λ) for a factorized Ising state by enumerating all spin states against
/// the interpolated covariance diag(Σ) + λ² (Σ − diag(Σ)).
pub fn log_r_lambda_ising(state: &GaussianState, model: &Model, lambda: f64) -> Result<f64> {
    require_plain_ising(state, model)?;
    let n = state.dim();
    if n > crate::oracle::MAX_EXHAUSTIVE_SPINS {
        return Err(invalid(format!("refusing to enumerate {n} spins")));
    }
    let m = tilted_means(state, model)?;
    let z = lambda * lambda;
    let sig = &state.sigma;
    let cov = DMatrix::from_fn(n, n, |i, j| if i == j { sig[(i, i)] } else { z * sig[(i, j)] });
    let chol =
        cov.cholesky().ok_or_else(|| invalid(format!("interpolated covariance is indefinite at λ = {lambda}")))?;
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let log_det_diag: f64 = (0..n).map(|i| sig[(i, i)].ln()).sum();
    let mut terms = Vec::with_capacity(1 << n);
    let mut x = DVector::zeros(n);
    for bits in 0u64..(1u64 << n) {
        let mut log_p = 0.0;
        for i in 0..n {
            x[i] = if bits >> i & 1 == 1 { 1.0 } else { -1.0 };
            log_p += (0.5 * (1.0 + x[i] * m[i])).ln();
        }
        let d = &x - &state.mu;
        let quad = d.dot(&chol.solve(&d));
        let quad_diag: f64 = (0..n).map(|i| d[i] * d[i] / sig[(i, i)]).sum();
        terms.push(log_p - 0.5 * quad - 0.5 * log_det + 0.5 * quad_diag + 0.5 * log_det_diag);
    }
    Ok(log_sum_exp(&terms))
}

pub fn r_lambda_ising(state: &GaussianState, model: &Model, lambda: f64) -> Result<f64> {
    log_r_lambda_ising(state, model, lambda).map(f64::exp)
}

/// Closed form of log R(λ) for two zero-field spins with unit variances and
/// covariance `c`.
pub fn bivariate_log_r_lambda(c: f64, lambda: f64) -> Result<f64> {
    let u = lambda.powi(4) * c * c;
    if !(u < 1.0) {
        return Err(invalid("outside the region where the Gaussian is proper"));
    }
    Ok(1.0 - 0.5 * (1.0 - u).ln() - 1.0 / (1.0 - u) + crate::special::log_cosh(lambda * lambda * c / (1.0 - u)))
}
