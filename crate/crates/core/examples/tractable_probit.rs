//! A single probit likelihood split into two half-power copies on the same
//! latent. EP is exact here, so log R vanishes.
//!
//! cargo run --example tractable_probit

use nalgebra::DMatrix;

use epcorr::correct::factorized_correction;
use epcorr::ep::{ep_solve, log_z_ep, EpConfig};
use epcorr::model::{Model, QuadraticBase, Site, SiteKind};
use epcorr::special::norm_cdf;

fn main() -> epcorr::Result<()> {
    let site = SiteKind::Probit { y: 1.0, m: 0.0, v: 1.0 };
    let sites = vec![Site::with_power(site, 0, 0.5), Site::with_power(site, 0, 0.5)];
    let model = Model::with_sites(QuadraticBase::kernel(DMatrix::from_element(1, 1, 1.0))?, sites)?;
    let state = ep_solve(&model, &EpConfig::gp())?;
    let lz = log_z_ep(&state, &model)?;
    let r = factorized_correction(&state, &model, &[3, 4])?;
    // ∫ Φ(x)^½ Φ(x)^½ N(x; 0, 1) dx = ½
    println!("Z_EP {:.12}  exact {:.12}", lz.exp(), norm_cdf(0.0));
    println!("log R {:.3e}", r.log_r);
    Ok(())
}
