//! Reconstructs a dense light field from every second and every fourth view
//! with the exact translation oracle standing in for the network, then
//! scores the synthesized views.
//!
//!     cargo run --example oracle_reconstruction

use lfcycle::lightfield::{subsample, AngularAxis};
use lfcycle::metrics::{evaluate, EvalOptions};
use lfcycle::reconstruct::{reconstruct, CascadeOrder, ReconstructionPlan};
use lfcycle::synth::{gen_planar_lf, SceneSpec, TranslationOracle};

fn main() -> lfcycle::Result<()> {
    let (dense, _) = gen_planar_lf(&SceneSpec::planar(1.0, 9, 64, 1))?;
    let h = TranslationOracle::new(1, AngularAxis::Horizontal);
    let v = TranslationOracle::new(1, AngularAxis::Vertical);
    for alpha in [2, 4] {
        let sparse = subsample(&dense, alpha)?;
        for order in [CascadeOrder::HV, CascadeOrder::VH] {
            let plan = ReconstructionPlan { alpha, order, horizontal: &h, vertical: &v };
            let recon = reconstruct(&sparse, &plan)?;
            let full = evaluate(&recon, &dense, alpha, &EvalOptions::default())?;
            let interior = evaluate(&recon, &dense, alpha, &EvalOptions { margin: alpha, ..Default::default() })?;
            println!(
                "alpha {alpha} {order:?}: {}x{} -> {}x{}, {} synthesized views, PSNR {:.2} dB full frame, {:.2} dB interior",
                sparse.rows(),
                sparse.cols(),
                recon.rows(),
                recon.cols(),
                full.views.len(),
                full.mean_psnr_db,
                interior.mean_psnr_db
            );
        }
    }
    Ok(())
}
