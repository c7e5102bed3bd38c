//! Fully factorized EC against tree-structured EC on one 4x4 grid instance,
//! with the second-order corrections of both.
//!
//! cargo run --release --example tree_ec -- 3

use epcorr::bench::{aad, generate_instance, WjConfig};
use epcorr::correct::{factorized_correction, log_r_tree};
use epcorr::ep::{ep_solve, log_z_ep, EpConfig};
use epcorr::model::Model;
use epcorr::oracle::ising_exhaustive;
use epcorr::tree::{build_spanning_tree, ep_tree_solve, log_z_ep_tree};

fn main() -> epcorr::Result<()> {
    let trial = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let (j, theta) = generate_instance(&WjConfig::default(), trial);
    let exact = ising_exhaustive(&j, &theta)?;
    let truth: Vec<f64> = exact.means.iter().copied().collect();
    let model = Model::ising(j.clone(), theta)?;
    let cfg = EpConfig::ising();

    let st = ep_solve(&model, &cfg)?;
    let lz = log_z_ep(&st, &model)?;
    let r = factorized_correction(&st, &model, &[3, 4])?;
    let means: Vec<f64> = st.mu.iter().copied().collect();
    println!("exact log Z      {:.6}", exact.log_z);
    println!("factorized  EC   {lz:.6}  +R {:.6}  AAD {:.4}", lz + r.log_r, aad(&truth, &means)?);

    let fact = build_spanning_tree(&j);
    let ts = ep_tree_solve(&model, &fact, &cfg)?;
    let lt = log_z_ep_tree(&ts, &model, &fact)?;
    let rt = log_r_tree(&ts, &model, &fact, &[3, 4])?;
    let means: Vec<f64> = ts.state.mu.iter().copied().collect();
    println!("tree        EC   {lt:.6}  +R {:.6}  AAD {:.4}", lt + rt.log_r, aad(&truth, &means)?);
    println!("tree edges: {:?}", fact.edges.iter().map(|(e, _)| *e).collect::<Vec<_>>());
    Ok(())
}
