//! GP regression with uniform noise on quantized observations: EP and
//! corrected predictive mean and variance on a few test inputs.
//!
//! cargo run --release --example gp_quantized

use epcorr::bench::{run_gp_quantized, GpQuantizedConfig};

fn main() -> epcorr::Result<()> {
    let config = GpQuantizedConfig { grid: vec![-4.0, -2.0, -0.5, 0.0, 0.5, 2.0, 4.0], ..Default::default() };
    let report = run_gp_quantized(&config)?;
    println!("kernel {:?}", report.kernel);
    println!("log Z_EP {:.5}  log R {:.5}", report.logz_ep, report.log_r);
    println!("{:>6} {:>9} {:>9} {:>9} {:>9}", "s", "mean EP", "mean+δ", "var EP", "var+δ");
    for r in &report.rows {
        println!(
            "{:>6.2} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            r.s, r.mean_ep, r.mean_corrected, r.var_ep, r.var_corrected
        );
    }
    Ok(())
}
