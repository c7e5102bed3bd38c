//! Eigenvalues of the rescaled EP covariance for the GP box model as the
//! half-width grows, and whether the correction series stays within its radius.
//!
//! cargo run --release --example convergence_radius

use epcorr::bench::linspace;
use epcorr::correct::convergence_diagnostics;
use epcorr::ep::{ep_solve, EpConfig};
use epcorr::model::{Kernel, Model, QuadraticBase, SiteKind};

fn main() -> epcorr::Result<()> {
    let n = 50;
    let k = Kernel::ornstein_uhlenbeck(1.0)?.matrix_1d(&linspace(0.0, 1.0, n))?;
    println!("{:>5} {:>8} {:>8} {:>8} {:>7}", "a", "γmin", "γmax", "radius", "inside");
    for a in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let model = Model::new(QuadraticBase::kernel(k.clone())?, vec![SiteKind::BoxCentered { a }; n])?;
        let state = ep_solve(&model, &EpConfig::gp())?;
        let d = convergence_diagnostics(&state.sigma);
        let (lo, hi) = (d.eigenvalues[0], d.eigenvalues[n - 1]);
        println!("{a:>5.2} {lo:>8.4} {hi:>8.4} {:>8.4} {:>7}", d.radius, d.within_radius);
    }
    Ok(())
}
