//! Probability that an Ornstein–Uhlenbeck path on [0, 1] stays inside |x| < a,
//! by EP, EP with corrections, and Monte Carlo, for increasing N.
//!
//! cargo run --release --example gp_box -- 1.0

use epcorr::bench::{run_gp_box, GpBoxConfig};

fn main() -> epcorr::Result<()> {
    let a = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let config = GpBoxConfig { a, mc_samples: 20_000, ..Default::default() };
    println!("{:>4} {:>10} {:>10} {:>10} {:>10} {:>8} {:>6}", "N", "EP", "EP+c4", "EP+c4,c6", "MC", "se", "γmax");
    for r in run_gp_box(&config)? {
        println!(
            "{:>4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>8.4} {:>6.3}",
            r.n,
            r.logz_ep,
            r.logz_ep + r.log_r_c4,
            r.logz_ep + r.log_r,
            r.logz_mc,
            r.mc_se,
            r.max_gamma
        );
    }
    Ok(())
}
