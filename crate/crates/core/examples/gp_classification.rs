//! Probit GP classification on a toy 1-d data set: EP evidence, its
//! correction, and corrected latent means at the training inputs.
//!
//! cargo run --release --example gp_classification

use epcorr::correct::{corrected_means, factorized_correction};
use epcorr::ep::{ep_solve, log_z_ep, EpConfig};
use epcorr::model::{Kernel, Model, QuadraticBase, SiteKind};

fn main() -> epcorr::Result<()> {
    let xs = [-2.0, -1.5, -1.0, -0.5, -0.2, 0.2, 0.5, 1.0, 1.5, 2.0];
    let ys = [-1.0, -1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0];
    for amplitude in [1.0, 4.0, 16.0] {
        let k = Kernel::squared_exponential(amplitude, 1.0)?.matrix_1d(&xs)?;
        let sites = ys.iter().map(|&y| SiteKind::Probit { y, m: 0.0, v: 1.0 }).collect();
        let model = Model::new(QuadraticBase::kernel(k)?, sites)?;
        let state = ep_solve(&model, &EpConfig::gp())?;
        let lz = log_z_ep(&state, &model)?;
        let r = factorized_correction(&state, &model, &[3, 4])?;
        // the order-l mean term needs c_{l+1}; probit tables stop at 4
        let m = corrected_means(&state, &model, &[3])?;
        println!(
            "amplitude {amplitude:>4}: log Z_EP {lz:.5}  log R {:.2e}  radius {:.3}",
            r.log_r, r.diagnostics.radius
        );
        let shifts: Vec<String> = (0..xs.len()).map(|i| format!("{:+.3}", m[i] - state.mu[i])).collect();
        println!("  mean shifts {}", shifts.join(" "));
    }
    Ok(())
}
