use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::correct::{pairing_sum, r_lambda_ising};
use crate::cumulants::ising_edge_cumulants;
use crate::ep::{ep_solve, log_z_ep, EpConfig};
use crate::error::Result;
use crate::model::{Model, SiteKind};
use crate::oracle::{
    bivariate_closed_forms, edge_cumulants_by_contour, gp_box_mc, ising_exhaustive, quadrature_site_moments,
    wick_pairing_bruteforce,
};
use crate::special::norm_cdf;
use crate::tree::{ep_tree_solve, log_z_ep_tree, Factorization};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestLine {
    pub name: String,
    pub passed: bool,
    /// Worst observed deviation.
    pub error: f64,
    pub tolerance: f64,
}

fn line(name: &str, error: f64, tolerance: f64) -> SelftestLine {
    SelftestLine { name: name.into(), passed: error <= tolerance, error, tolerance }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-3)
}

fn random_ising(rng: &mut ChaCha20Rng, n: usize, d: f64) -> Model {
    let mut j = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            let v = rng.gen_range(-d..d);
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
    }
    let theta = DVector::from_fn(n, |_, _| rng.gen_range(-0.25..0.25));
    Model::ising(j, theta).expect("valid couplings")
}

fn cumulant_gap(site: SiteKind, gamma: f64, lambda: f64) -> Result<f64> {
    let closed = site.tilted_cumulants(gamma, lambda)?;
    let q = quadrature_site_moments(&site, gamma, lambda, 6)?.cumulants();
    let mut worst = 0.0f64;
    for l in 1..=6 {
        if closed.has(l) {
            worst = worst.max(rel(closed.get(l)?, q[l - 1]));
        }
    }
    Ok(worst)
}

/// Quick oracle-equivalence checks; each line compares a closed form or a
/// solver result with an independent numerical route.
pub fn selftest(seed: u64) -> Result<Vec<SelftestLine>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut worst = 0.0f64;
    for &j in &[0.1, 0.3, 0.7] {
        let m = Model::ising(DMatrix::from_row_slice(2, 2, &[0.0, j, j, 0.0]), DVector::zeros(2))?;
        let st = ep_solve(&m, &EpConfig::ising())?;
        worst = worst.max((log_z_ep(&st, &m)? - bivariate_closed_forms(j).log_z_ep).abs());
    }
    out.push(line("bivariate log Z_EP vs closed form", worst, 1e-10));

    let mut worst = 0.0f64;
    for _ in 0..10 {
        let g = rng.gen_range(-2.0..2.0);
        worst = worst.max(cumulant_gap(SiteKind::Ising, g, 0.0)?);
    }
    out.push(line("spin cumulants vs enumeration", worst, 1e-5));

    let mut worst = 0.0f64;
    for _ in 0..5 {
        let (a, lam) = (rng.gen_range(0.3..2.0), rng.gen_range(0.3..3.0));
        worst = worst.max(cumulant_gap(SiteKind::BoxCentered { a }, 0.0, lam)?);
        let (y, g) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        worst = worst.max(cumulant_gap(SiteKind::BoxObserved { y, a }, g, lam)?);
    }
    out.push(line("box cumulants vs quadrature", worst, 1e-5));

    let mut worst = 0.0f64;
    for _ in 0..5 {
        let y = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let site = SiteKind::Probit { y, m: rng.gen_range(-1.0..1.0), v: rng.gen_range(0.2..2.0) };
        worst = worst.max(cumulant_gap(site, rng.gen_range(-1.0..1.0), rng.gen_range(0.3..3.0))?);
    }
    out.push(line("probit cumulants vs quadrature", worst, 1e-5));

    let mut worst = 0.0f64;
    for _ in 0..5 {
        let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let p = [raw[0] / s, raw[1] / s, raw[2] / s, raw[3] / s];
        let closed = ising_edge_cumulants(&p)?;
        let contour = edge_cumulants_by_contour(&p);
        for l in 0..=4 {
            for lp in 0..=(4 - l) {
                if l + lp >= 2 {
                    worst = worst.max((closed.get(l, lp)? - contour[l][lp]).abs());
                }
            }
        }
    }
    out.push(line("edge cumulants vs contour", worst, 1e-8));

    let mut worst = 0.0f64;
    for _ in 0..5 {
        let rel: Vec<Vec<f64>> = (0..4).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        // two factors with two variables each; the relation block is 2x2
        let block: Vec<Vec<f64>> = vec![vec![rel[0][2], rel[0][3]], vec![rel[1][2], rel[1][3]]];
        let mut sym = vec![vec![0.0; 4]; 4];
        for a in 0..2 {
            for b in 0..2 {
                sym[a][2 + b] = block[a][b];
                sym[2 + b][a] = block[a][b];
            }
        }
        for alpha in [[2usize, 1], [3, 0], [1, 2]] {
            for alpha_p in [[1usize, 2], [0, 3], [2, 1]] {
                let mut symbols = vec![0; alpha[0]];
                symbols.extend(vec![1; alpha[1]]);
                symbols.extend(vec![2; alpha_p[0]]);
                symbols.extend(vec![3; alpha_p[1]]);
                let (brute, _) = wick_pairing_bruteforce(&symbols, &sym)?;
                let fact = |k: usize| (1..=k).product::<usize>() as f64;
                let norm = fact(alpha[0]) * fact(alpha[1]) * fact(alpha_p[0]) * fact(alpha_p[1]);
                let ours = pairing_sum(&alpha, &alpha_p, &block)?;
                worst = worst.max((ours - brute / norm).abs());
            }
        }
    }
    out.push(line("pairing sums vs brute-force Wick", worst, 1e-12));

    let mut worst = 0.0f64;
    for n in [4, 6, 8] {
        let m = random_ising(&mut rng, n, 0.3);
        let st = ep_solve(&m, &EpConfig::ising())?;
        let (j, theta) = m.couplings().expect("coupling model");
        let exact = ising_exhaustive(j, theta)?;
        let r = r_lambda_ising(&st, &m, 1.0)?;
        let oracle = (exact.log_z - log_z_ep(&st, &m)?).exp();
        worst = worst.max((r - oracle).abs() / oracle);
    }
    out.push(line("R(λ=1) vs exhaustive Z / Z_EP", worst, 1e-8));

    let mut worst = 0.0f64;
    for _ in 0..3 {
        let n = 5;
        let mut j = DMatrix::zeros(n, n);
        for a in 0..n - 1 {
            let v = rng.gen_range(-0.8..0.8);
            j[(a, a + 1)] = v;
            j[(a + 1, a)] = v;
        }
        let theta = DVector::from_fn(n, |_, _| rng.gen_range(-0.25..0.25));
        let exact = ising_exhaustive(&j, &theta)?;
        let m = Model::ising(j, theta)?;
        let fact = Factorization::from_edges(n, &[(0, 1), (1, 2), (2, 3), (3, 4)])?;
        let ts = ep_tree_solve(&m, &fact, &EpConfig::ising())?;
        worst = worst.max((log_z_ep_tree(&ts, &m, &fact)? - exact.log_z).abs());
    }
    out.push(line("tree EC on a chain vs enumeration", worst, 1e-8));

    let a = 0.8;
    let (lz, se) = gp_box_mc(&DMatrix::from_element(1, 1, 1.0), a, 200_000, seed)?;
    let truth = (2.0 * norm_cdf(a) - 1.0).ln();
    out.push(line("box Monte Carlo vs closed form, in standard errors", (lz - truth).abs() / se, 4.0));

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        for l in selftest(7).unwrap() {
            assert!(l.passed, "{l:?}");
        }
    }
}
