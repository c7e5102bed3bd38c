//! Runs the 16-spin benchmark for one (graph, coupling, strength) setting and
//! prints the per-method summary.
//!
//! cargo run --release --example wainwright_jordan -- grid4x4 mixed 1.0 100

use epcorr::bench::{run_wainwright_jordan, Coupling, Graph, WjConfig};

fn main() -> epcorr::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let graph = match args.first().map(String::as_str) {
        Some("full") => Graph::Full,
        _ => Graph::Grid4x4,
    };
    let coupling = match args.get(1).map(String::as_str) {
        Some("repulsive") => Coupling::Repulsive,
        Some("attractive") => Coupling::Attractive,
        _ => Coupling::Mixed,
    };
    let d_coup = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let trials = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(100);
    let config = WjConfig { graph, coupling, d_coup, trials, ..Default::default() };
    let report = run_wainwright_jordan(&config)?;
    println!("{graph:?} {coupling:?} d_coup={d_coup} trials={trials}");
    println!("{:<8} {:>10} {:>12} {:>6} {:>9}", "method", "mean AAD", "mean |dlogZ|", "used", "excluded");
    for s in &report.summary {
        println!(
            "{:<8} {:>10.4} {:>12.4} {:>6} {:>9}",
            s.method.name(),
            s.mean_aad,
            s.mean_abs_dlogz,
            s.used,
            s.excluded
        );
    }
    Ok(())
}
