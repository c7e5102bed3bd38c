use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use crate::bench::aad;
use crate::correct::{convergence_diagnostics, pairing_sum, relation_matrix};
use crate::cumulants::{
    ising_edge_cumulants, ising_site_cumulants, moments_to_cumulants, probit_cumulants, truncated_centered_cumulants,
    truncated_noncentered_cumulants,
};
use crate::ep::{ep_solve, log_z_ep, stationarity_residual, EpConfig};
use crate::model::Model;
use crate::oracle::ising_exhaustive;

fn symmetric(n: usize, scale: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-scale..scale, n * (n - 1) / 2).prop_map(move |v| {
        let mut j = DMatrix::zeros(n, n);
        let mut k = 0;
        for a in 0..n {
            for b in (a + 1)..n {
                j[(a, b)] = v[k];
                j[(b, a)] = v[k];
                k += 1;
            }
        }
        j
    })
}

fn spd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, n * n).prop_map(move |v| {
        let b = DMatrix::from_vec(n, n, v);
        &b * b.transpose() + DMatrix::identity(n, n) * 0.1
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cumulants_shift_only_the_mean(m in prop::array::uniform5(-1.0..1.0f64), s in -2.0..2.0f64) {
        // moments of a valid distribution: a two-point law at x0, x1 with weights w, 1-w
        let (x0, x1, w) = (m[0], m[1] + 1.5, 0.2 + 0.6 * (m[2] + 1.0) / 2.0);
        let raw = |shift: f64| {
            let mut out = [0.0; 5];
            for (k, slot) in out.iter_mut().enumerate() {
                let p = k as i32 + 1;
                *slot = w * (x0 + shift).powi(p) + (1.0 - w) * (x1 + shift).powi(p);
            }
            out
        };
        let c = moments_to_cumulants(&raw(0.0));
        let d = moments_to_cumulants(&raw(s));
        prop_assert!((d[0] - c[0] - s).abs() < 1e-10);
        for l in 1..5 {
            prop_assert!((d[l] - c[l]).abs() < 1e-8 * (1.0 + c[l].abs()), "order {}", l + 1);
        }
    }

    #[test]
    fn centered_box_is_symmetric_and_narrower(a in 0.05..5.0f64, lambda in 0.01..50.0f64) {
        let t = truncated_centered_cumulants(a, lambda).unwrap();
        prop_assert_eq!(t.get(1).unwrap(), 0.0);
        prop_assert_eq!(t.get(3).unwrap(), 0.0);
        prop_assert_eq!(t.get(5).unwrap(), 0.0);
        let c2 = t.get(2).unwrap();
        prop_assert!(c2 > 0.0 && c2 <= (1.0 / lambda).min(a * a / 3.0) * (1.0 + 1e-10));
        // platykurtic: the box can only flatten the Gaussian
        prop_assert!(t.get(4).unwrap() <= 1e-12 * c2 * c2);
    }

    #[test]
    fn noncentered_box_reflects(a in 0.1..3.0f64, mu in -2.0..2.0f64, lambda in 0.1..10.0f64) {
        let p = truncated_noncentered_cumulants(a, mu, lambda).unwrap();
        let n = truncated_noncentered_cumulants(a, -mu, lambda).unwrap();
        for l in 1..=5 {
            let sign = if l % 2 == 1 { -1.0 } else { 1.0 };
            let (x, y) = (p.get(l).unwrap(), n.get(l).unwrap());
            prop_assert!((y - sign * x).abs() <= 1e-9 * (1.0 + x.abs()), "order {}", l);
        }
        let m1 = p.get(1).unwrap();
        prop_assert!(m1.abs() < a && p.get(2).unwrap() > 0.0);
    }

    #[test]
    fn probit_variance_shrinks(m in -1.0..1.0f64, v in 0.0..2.0f64, mu in -2.0..2.0f64, s2 in 0.1..4.0f64) {
        let t = probit_cumulants(1.0, m, v, mu, s2).unwrap();
        let c2 = t.get(2).unwrap();
        prop_assert!(c2 > 0.0 && c2 < s2);
        // a positive label pulls the mean up
        prop_assert!(t.get(1).unwrap() > mu);
    }

    #[test]
    fn spin_cumulants_have_parity(m in -0.99..0.99f64) {
        let p = ising_site_cumulants(m).unwrap();
        let n = ising_site_cumulants(-m).unwrap();
        for l in 1..=6 {
            let sign = if l % 2 == 1 { -1.0 } else { 1.0 };
            prop_assert!((n.get(l).unwrap() - sign * p.get(l).unwrap()).abs() < 1e-12);
        }
        prop_assert!((p.get(2).unwrap() - (1.0 - m * m)).abs() < 1e-15);
    }

    #[test]
    fn edge_tables_swap(raw in prop::array::uniform4(0.01..1.0f64)) {
        let s: f64 = raw.iter().sum();
        let p = [raw[0] / s, raw[1] / s, raw[2] / s, raw[3] / s];
        let e = ising_edge_cumulants(&p).unwrap();
        let f = ising_edge_cumulants(&[p[0], p[2], p[1], p[3]]).unwrap();
        for l in 0..=4 {
            for lp in 0..=(4 - l) {
                if l + lp >= 1 {
                    prop_assert!((e.swapped().get(l, lp).unwrap() - f.get(l, lp).unwrap()).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn pairing_sums_transpose(
        a in prop::collection::vec(0usize..3, 2),
        b in prop::collection::vec(0usize..3, 2),
        r in prop::array::uniform4(-1.0..1.0f64),
    ) {
        let rel = vec![vec![r[0], r[1]], vec![r[2], r[3]]];
        let rel_t = vec![vec![r[0], r[2]], vec![r[1], r[3]]];
        let x = pairing_sum(&a, &b, &rel).unwrap();
        let y = pairing_sum(&b, &a, &rel_t).unwrap();
        prop_assert!((x - y).abs() < 1e-14);
        if a.iter().sum::<usize>() != b.iter().sum::<usize>() {
            prop_assert_eq!(x, 0.0);
        }
        // all-ones relation: Σ_β 1/β! = n! / (α! α'!)
        let ones = vec![vec![1.0; 2]; 2];
        let total: usize = a.iter().sum();
        if total == b.iter().sum::<usize>() {
            let f = |k: usize| (1..=k).product::<usize>() as f64;
            let expect = f(total) / (f(a[0]) * f(a[1]) * f(b[0]) * f(b[1]));
            let got = pairing_sum(&a, &b, &ones).unwrap();
            prop_assert!((got - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn relation_and_diagnostics(sigma in spd(5)) {
        let r = relation_matrix(&sigma);
        for i in 0..5 {
            prop_assert_eq!(r[(i, i)], 0.0);
            for j in 0..5 {
                prop_assert!((r[(i, j)] - r[(j, i)]).abs() < 1e-14);
            }
        }
        let d = convergence_diagnostics(&sigma);
        let trace: f64 = d.eigenvalues.iter().sum();
        prop_assert!((trace - 5.0).abs() < 1e-10);
        prop_assert!(d.eigenvalues.iter().all(|&g| g > 0.0));
        prop_assert!(d.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn aad_is_bounded(v in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..20)) {
        let (t, e): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        let d = aad(&t, &e).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(aad(&t, &t).unwrap(), 0.0);
        prop_assert!((aad(&e, &t).unwrap() - d).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ep_fixed_point_is_stationary(j in symmetric(6, 0.25), th in prop::collection::vec(-0.3..0.3f64, 6)) {
        let theta = DVector::from_vec(th);
        let exact = ising_exhaustive(&j, &theta).unwrap();
        let m = Model::ising(j, theta).unwrap();
        let st = ep_solve(&m, &EpConfig::ising()).unwrap();
        prop_assert!(st.converged);
        prop_assert!(stationarity_residual(&st, &m) < 1e-8);
        for i in 0..6 {
            prop_assert!(st.mu[i].abs() < 1.0);
            prop_assert!((st.sigma[(i, i)] - (1.0 - st.mu[i] * st.mu[i])).abs() < 1e-8);
        }
        // weak couplings: EP is close to exact
        prop_assert!((log_z_ep(&st, &m).unwrap() - exact.log_z).abs() < 0.2);
    }

    #[test]
    fn flipping_fields_flips_means(j in symmetric(5, 0.3), th in prop::collection::vec(-0.3..0.3f64, 5)) {
        let theta = DVector::from_vec(th);
        let a = Model::ising(j.clone(), theta.clone()).unwrap();
        let b = Model::ising(j, -theta).unwrap();
        let sa = ep_solve(&a, &EpConfig::ising()).unwrap();
        let sb = ep_solve(&b, &EpConfig::ising()).unwrap();
        for i in 0..5 {
            prop_assert!((sa.mu[i] + sb.mu[i]).abs() < 1e-7);
        }
        prop_assert!((log_z_ep(&sa, &a).unwrap() - log_z_ep(&sb, &b).unwrap()).abs() < 1e-8);
    }
}
