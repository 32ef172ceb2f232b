//! Pre-trains a baseline on synthetic translated pairs, fine-tunes one model
//! per angular axis on sparse light fields alone, and compares held-out
//! reconstruction quality before and after. Checkpoints are written to the
//! output directory.
//!
//!     cargo run --release --example self_supervised_finetune -- [ITERATIONS] [OUT_DIR]

use std::path::PathBuf;

use lfcycle::io::save_checkpoint;
use lfcycle::lightfield::{subsample, AngularAxis, LightField};
use lfcycle::metrics::{evaluate, EvalOptions};
use lfcycle::net::{ArchConfig, InterpolatorModel};
use lfcycle::reconstruct::{reconstruct, CascadeOrder, ReconstructionPlan};
use lfcycle::synth::{gen_planar_lf, SceneSpec};
use lfcycle::trainer::{finetune, pretrain_baseline, PretrainConfig, SchedulerConfig, TrainConfig, TrainingData};

fn sparse_dense(d: f64, seed: u64) -> lfcycle::Result<(LightField, LightField)> {
    let (dense, _) = gen_planar_lf(&SceneSpec::planar(d, 9, 64, seed))?;
    Ok((subsample(&dense, 2)?, dense))
}

fn held_out_psnr(h: &InterpolatorModel<f32>, v: &InterpolatorModel<f32>, held: &[(LightField, LightField)]) -> lfcycle::Result<f64> {
    let plan = ReconstructionPlan { alpha: 2, order: CascadeOrder::HV, horizontal: h, vertical: v };
    let mut total = 0.0;
    for (sparse, dense) in held {
        let recon = reconstruct(sparse, &plan)?;
        total += evaluate(&recon, dense, 2, &EvalOptions { margin: 4, ..Default::default() })?.mean_psnr_db;
    }
    Ok(total / held.len() as f64)
}

fn main() -> lfcycle::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().and_then(|s| s.parse().ok()).unwrap_or(600);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("lfcycle-finetune"));

    let pretrain = PretrainConfig {
        arch: ArchConfig::new(vec![8, 16, 32], 9)?,
        iterations: 300,
        batch_size: 4,
        patch_size: 48,
        seed: 1,
        ..Default::default()
    };
    let pre = pretrain_baseline(&pretrain)?;
    println!("pretrained in {:.0}s, final loss {:?}", pre.wall_clock_secs, pre.final_loss);

    let train = [(1.0, 10), (2.0, 11), (1.0, 12), (2.0, 13)]
        .iter()
        .map(|&(d, seed)| sparse_dense(d, seed).map(|(s, _)| s))
        .collect::<lfcycle::Result<Vec<_>>>()?;
    let held = vec![sparse_dense(1.0, 100)?, sparse_dense(2.0, 101)?];
    let data = TrainingData::new(train)?;
    let config = TrainConfig {
        iterations,
        batch_size: 4,
        coarse_crop: 64,
        fine_crop: 48,
        desk_crops: (64, 48),
        scheduler: SchedulerConfig { window: (iterations / 6).max(1), ..Default::default() },
        seed: 3,
        ..Default::default()
    };

    let mut tuned = Vec::new();
    for (axis, tag) in [(AngularAxis::Horizontal, "h"), (AngularAxis::Vertical, "v")] {
        let (model, report) = finetune(&pre.model, &data, axis, &config)?;
        let first = report.history.first().map_or(f64::NAN, |r| r.total);
        println!(
            "{axis}: objective {first:.4} -> {:.4} in {:.0}s, {} patches rejected by the disparity screen",
            report.tail_loss(50).unwrap_or(f64::NAN),
            report.wall_clock_secs,
            report.patches_rejected
        );
        save_checkpoint(&model, &out.join(format!("{tag}.ckpt")), "finetuned/self", config.seed, &report.notes)?;
        tuned.push(model);
    }
    println!(
        "held-out PSNR: baseline {:.2} dB, fine-tuned {:.2} dB",
        held_out_psnr(&pre.model, &pre.model, &held)?,
        held_out_psnr(&tuned[0], &tuned[1], &held)?
    );
    Ok(())
}
