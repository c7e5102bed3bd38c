//! Two independent routes to the same quantity, compared.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::correct::{factorized_correction, log_r_tree, pairing_sum};
use crate::cumulants::{moments_to_cumulants, truncated_centered_cumulants, truncated_noncentered_cumulants};
use crate::ep::{ep_solve, log_z_ep, site_cumulants, EpConfig};
use crate::model::{Model, SiteKind};
use crate::oracle::quadrature_site_moments;
use crate::special::{norm_cdf, norm_pdf};
use crate::tree::{ep_tree_solve, log_z_ep_tree, Factorization};

/// Raw moments ⟨x⟩..⟨x⁵⟩ of N(x; μ, 1/λ) on |x| < a, written out term by term
/// from the μ- and λ-derivatives of Φ(z_max) − Φ(z_min).
fn printed_noncentered_moments(a: f64, mu: f64, lambda: f64) -> [f64; 5] {
    let sl = lambda.sqrt();
    let (zx, zn) = (sl * (mu + a), sl * (mu - a));
    let z = norm_cdf(zx) - norm_cdf(zn);
    let d = |f: &dyn Fn(f64) -> f64| (f(zx) * norm_pdf(zx) - f(zn) * norm_pdf(zn)) / z;
    let (l, l2) = (lambda, lambda * lambda);
    let (mu2, mu3) = (mu * mu, mu * mu * mu);
    let mu4 = mu2 * mu2;
    let x1 = mu + d(&|_| 1.0) / sl;
    let x2 = 2.0 * x1 * mu + 1.0 / l - mu2 - d(&|z| z) / l;
    let x3 = 3.0 * x2 * mu + x1 * (3.0 / l - 3.0 * mu2) - 3.0 / l * mu + mu3 - d(&|z| 1.0 - z * z) / (l * sl);
    let x4 = 4.0 * x3 * mu + x2 * (2.0 / l - 6.0 * mu2) + x1 * (4.0 * mu3 - 4.0 / l * mu) + 2.0 / l * mu2 - mu4
        + 1.0 / l2
        - d(&|z| z * (1.0 + z * z)) / l2;
    let x5 = 5.0 * x4 * mu
        + x3 * (6.0 / l - 10.0 * mu2)
        + x2 * (10.0 * mu3 - 18.0 / l * mu)
        + x1 * (18.0 / l * mu2 - 5.0 * mu4 - 3.0 / l2)
        + 3.0 / l2 * mu
        - 6.0 / l * mu3
        + mu4 * mu
        - d(&|z| 1.0 + 2.0 * z * z - z.powi(4)) / (l2 * sl);
    [x1, x2, x3, x4, x5]
}

#[test]
fn printed_noncentered_moments_match_closed_form() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for _ in 0..200 {
        let a = rng.gen_range(0.5..2.0);
        let mu = rng.gen_range(-1.0..1.0);
        let lambda = rng.gen_range(0.5..4.0);
        let printed = moments_to_cumulants(&printed_noncentered_moments(a, mu, lambda));
        let ours = truncated_noncentered_cumulants(a, mu, lambda).unwrap();
        for l in 1..=5 {
            let scale = lambda.powf(-(l as f64) / 2.0);
            let diff = (printed[l - 1] - ours.get(l).unwrap()).abs();
            assert!(diff <= 1e-8 * scale.max(1.0), "a={a} mu={mu} lambda={lambda} order {l}: {diff:e}");
        }
    }
}

#[test]
fn box_cumulants_match_quadrature() {
    for &(a, lambda) in &[(0.3, 0.5), (1.0, 1.0), (2.5, 3.0), (0.8, 40.0)] {
        let closed = truncated_centered_cumulants(a, lambda).unwrap();
        let q = quadrature_site_moments(&SiteKind::BoxCentered { a }, 0.0, lambda, 6).unwrap().cumulants();
        for l in [2, 4, 6] {
            let floor = 1e-3 * lambda.powf(-(l as f64) / 2.0);
            assert_relative_eq!(closed.get(l).unwrap(), q[l - 1], epsilon = 1e-8 * floor.max(1e-3));
        }
    }
}

/// Single-column pairing sums reduce to r^l / l!, so the factorized log R is
/// also Σ c_la c_lb · pairing_sum([l], [l], [[ρ]]).
#[test]
fn factorized_log_r_via_pairing_sums() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let n = 6;
    let mut j = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            let v = rng.gen_range(-0.3..0.3);
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
    }
    let theta = DVector::from_fn(n, |_, _| rng.gen_range(-0.2..0.2));
    let m = Model::ising(j, theta).unwrap();
    let st = ep_solve(&m, &EpConfig::ising()).unwrap();
    let tables = site_cumulants(&st, &m).unwrap();
    let rep = factorized_correction(&st, &m, &[3, 4]).unwrap();
    let mut total = 0.0;
    for a in 0..n {
        for b in (a + 1)..n {
            let rho = st.sigma[(a, b)] / (st.sigma[(a, a)] * st.sigma[(b, b)]);
            for l in [3usize, 4] {
                let p = pairing_sum(&[l], &[l], &[vec![rho]]).unwrap();
                total += tables[a].get(l).unwrap() * tables[b].get(l).unwrap() * p;
            }
        }
    }
    assert_relative_eq!(rep.log_r, total, max_relative = 1e-12);
}

/// The tree solver and corrections on an edgeless factorization agree with
/// the plain solver.
#[test]
fn edgeless_tree_matches_factorized() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let n = 5;
    let mut j = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            let v = rng.gen_range(-0.4..0.4);
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
    }
    let theta = DVector::from_fn(n, |_, _| rng.gen_range(-0.2..0.2));
    let m = Model::ising(j, theta).unwrap();
    let cfg = EpConfig::ising();
    let st = ep_solve(&m, &cfg).unwrap();
    let fact = Factorization::fully_factorized(n);
    let ts = ep_tree_solve(&m, &fact, &cfg).unwrap();
    assert_relative_eq!(log_z_ep_tree(&ts, &m, &fact).unwrap(), log_z_ep(&st, &m).unwrap(), epsilon = 1e-8);
    let tree = log_r_tree(&ts, &m, &fact, &[3, 4]).unwrap();
    let flat = factorized_correction(&st, &m, &[3, 4]).unwrap();
    assert_relative_eq!(tree.log_r, flat.log_r, epsilon = 1e-8);
}
