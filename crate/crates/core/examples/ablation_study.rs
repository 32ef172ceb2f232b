//! Runs the five-way comparison of training variants (pretrained baseline,
//! supervised fine-tuning, no cycle loss, V-H cascade, full model) on two
//! small synthetic light fields.
//!
//!     cargo run --release --example ablation_study -- [ITERATIONS]

use lfcycle::ablation::{run_ablation, AblationConfig};
use lfcycle::net::ArchConfig;
use lfcycle::synth::{gen_planar_lf, SceneSpec};
use lfcycle::trainer::{pretrain_baseline, PretrainConfig, SchedulerConfig, TrainConfig};

fn main() -> lfcycle::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let dense = vec![
        gen_planar_lf(&SceneSpec::planar(1.0, 9, 48, 20))?.0,
        gen_planar_lf(&SceneSpec::planar(2.0, 9, 48, 21))?.0,
    ];
    let baseline = pretrain_baseline(&PretrainConfig {
        arch: ArchConfig::new(vec![8, 16, 32], 9)?,
        iterations: 200,
        batch_size: 4,
        patch_size: 32,
        seed: 1,
        ..Default::default()
    })?
    .model;
    let train = TrainConfig {
        iterations,
        batch_size: 4,
        coarse_crop: 48,
        fine_crop: 32,
        desk_crops: (48, 32),
        scheduler: SchedulerConfig { window: (iterations / 4).max(1), ..Default::default() },
        seed: 2,
        ..Default::default()
    };
    let report = run_ablation(&dense, &baseline, &AblationConfig { alpha: 2, train, margin: 4 }, None)?;
    for m in &report.modes {
        println!("{:<32} {:>7.2} dB  SSIM {:.4}", m.label, m.mean_psnr_db, m.mean_ssim);
    }
    println!("supervised at least as good as pretrained: {}", report.supervised_at_least_pretrained);
    Ok(())
}
