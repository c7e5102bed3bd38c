//! Tilted-distribution cumulants for every site kind, next to the same numbers
//! from adaptive quadrature.
//!
//! cargo run --example cumulant_tables

use epcorr::model::SiteKind;
use epcorr::oracle::quadrature_site_moments;

fn main() -> epcorr::Result<()> {
    let cases = [
        ("spin", SiteKind::Ising, 0.4, 0.0),
        ("box", SiteKind::BoxCentered { a: 1.0 }, 0.0, 1.5),
        ("observed box", SiteKind::BoxObserved { y: 0.3, a: 0.5 }, 0.2, 2.0),
        ("probit", SiteKind::Probit { y: 1.0, m: 0.0, v: 1.0 }, -0.5, 1.0),
        ("step", SiteKind::Probit { y: -1.0, m: 0.5, v: 0.0 }, 0.0, 1.0),
    ];
    for (name, site, gamma, lambda) in cases {
        let closed = site.tilted_cumulants(gamma, lambda)?;
        let quad = quadrature_site_moments(&site, gamma, lambda, 6)?.cumulants();
        println!("{name} (γ={gamma}, Λ={lambda})");
        for l in 1..=closed.max_order() {
            println!("  c{l} {:>14.8} {:>14.8}", closed.get(l)?, quad[l - 1]);
        }
    }
    Ok(())
}
