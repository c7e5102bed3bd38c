//! Two coupled spins: exact log Z, EP, the second-order correction, and the
//! full log R(λ) curve from the closed form.
//!
//! cargo run --example bivariate_ising

use nalgebra::{DMatrix, DVector};

use epcorr::correct::{bivariate_log_r_lambda, factorized_correction};
use epcorr::ep::{ep_solve, log_z_ep, EpConfig};
use epcorr::model::Model;
use epcorr::oracle::bivariate_closed_forms;

fn main() -> epcorr::Result<()> {
    println!("{:>5} {:>10} {:>10} {:>10} {:>12}", "J", "exact", "EP", "EP+R", "log R(1)");
    for j in [0.1, 0.25, 0.5, 0.75, 1.0] {
        let model = Model::ising(DMatrix::from_row_slice(2, 2, &[0.0, j, j, 0.0]), DVector::zeros(2))?;
        let state = ep_solve(&model, &EpConfig::ising())?;
        let lz = log_z_ep(&state, &model)?;
        let r = factorized_correction(&state, &model, &[3, 4])?;
        let closed = bivariate_closed_forms(j);
        let full = bivariate_log_r_lambda(closed.sigma12, 1.0)?;
        println!("{j:>5.2} {:>10.6} {lz:>10.6} {:>10.6} {full:>12.6}", closed.log_z_exact, lz + r.log_r);
    }
    Ok(())
}
