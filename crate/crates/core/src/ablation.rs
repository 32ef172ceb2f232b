//! The five-way comparison of training variants on one data set.
//!
//! | mode        | models                          | cascade |
//! |-------------|---------------------------------|---------|
//! | pretrained  | baseline for both axes          | H then V |
//! | supervised  | fine-tuned on dense ground truth | H then V |
//! | no-cycle    | reconstruction loss only        | H then V |
//! | vh          | full self-supervised models     | V then H |
//! | full        | full self-supervised models     | H then V |
//!
//! Only completion is guaranteed. Orderings between modes are reported,
//! not enforced.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{save_checkpoint, save_lf, write_json};
use crate::lightfield::{subsample, AngularAxis, LightField};
use crate::metrics::{evaluate, EvalOptions, EvalReport};
use crate::net::InterpolatorModel;
use crate::reconstruct::{reconstruct, CascadeOrder, ReconstructionPlan};
use crate::trainer::{finetune, TrainConfig, TrainMode, TrainingData};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    Pretrained,
    Supervised,
    NoCycle,
    Vh,
    Full,
}

impl AblationMode {
    pub const ALL: [Self; 5] = [Self::Pretrained, Self::Supervised, Self::NoCycle, Self::Vh, Self::Full];

    pub fn name(self) -> &'static str {
        match self {
            Self::Pretrained => "pretrained",
            Self::Supervised => "supervised",
            Self::NoCycle => "no-cycle",
            Self::Vh => "vh",
            Self::Full => "full",
        }
    }

    /// Row label of the usual results table.
    pub fn label(self) -> &'static str {
        match self {
            Self::Pretrained => "SepConv Pretrained",
            Self::Supervised => "SepConv Supervised Fine-tuning",
            Self::NoCycle => "Ours without Cycle Loss",
            Self::Vh => "Ours V-H CNN",
            Self::Full => "Ours Full Model",
        }
    }

    fn order(self) -> CascadeOrder {
        if self == Self::Vh {
            CascadeOrder::VH
        } else {
            CascadeOrder::HV
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationConfig {
    pub alpha: usize,
    /// Shared by every fine-tuning run; the mode field is overridden.
    pub train: TrainConfig,
    pub margin: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub mode: AblationMode,
    pub label: String,
    pub order: CascadeOrder,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    /// One report per light field.
    pub reports: Vec<EvalReport>,
    pub train_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub alpha: usize,
    pub seed: u64,
    pub iterations: usize,
    pub modes: Vec<ModeResult>,
    /// `supervised` scored at least as high as `pretrained`.
    pub supervised_at_least_pretrained: bool,
}

impl AblationReport {
    pub fn mode(&self, mode: AblationMode) -> Option<&ModeResult> {
        self.modes.iter().find(|m| m.mode == mode)
    }
}

struct AxisPair {
    h: InterpolatorModel<f32>,
    v: InterpolatorModel<f32>,
    secs: f64,
}

fn train_pair(baseline: &InterpolatorModel<f32>, data: &TrainingData, config: &TrainConfig, mode: TrainMode) -> Result<AxisPair> {
    let started = Instant::now();
    let cfg = TrainConfig { mode, ..config.clone() };
    let (h, _) = finetune(baseline, data, AngularAxis::Horizontal, &cfg)?;
    let (v, _) = finetune(baseline, data, AngularAxis::Vertical, &cfg)?;
    Ok(AxisPair { h, v, secs: started.elapsed().as_secs_f64() })
}

/// Runs all five modes on `dense` fields sub-sampled by `config.alpha`.
/// With a `workdir`, checkpoints and reconstructions are written there.
pub fn run_ablation(
    dense: &[LightField],
    baseline: &InterpolatorModel<f32>,
    config: &AblationConfig,
    workdir: Option<&Path>,
) -> Result<AblationReport> {
    if dense.is_empty() {
        return Err(Error::InvalidArgument("ablation needs at least one dense light field".into()));
    }
    let sparse = dense.iter().map(|d| subsample(d, config.alpha)).collect::<Result<Vec<_>>>()?;
    let data = TrainingData::with_ground_truth(sparse.clone(), dense.to_vec())?;

    let pretrained = AxisPair { h: baseline.clone(), v: baseline.clone(), secs: 0.0 };
    let supervised = train_pair(baseline, &data, &config.train, TrainMode::Supervised)?;
    let no_cycle = train_pair(baseline, &data, &config.train, TrainMode::NoCycle)?;
    let full = train_pair(baseline, &data, &config.train, TrainMode::SelfSupervised)?;

    let mut modes = Vec::new();
    for mode in AblationMode::ALL {
        let pair = match mode {
            AblationMode::Pretrained => &pretrained,
            AblationMode::Supervised => &supervised,
            AblationMode::NoCycle => &no_cycle,
            AblationMode::Vh | AblationMode::Full => &full,
        };
        let plan = ReconstructionPlan { alpha: config.alpha, order: mode.order(), horizontal: &pair.h, vertical: &pair.v };
        let mut reports = Vec::with_capacity(dense.len());
        for (i, (s, d)) in sparse.iter().zip(dense).enumerate() {
            let recon = reconstruct(s, &plan)?;
            let options = EvalOptions { margin: config.margin, dataset_id: format!("lf{i}") };
            reports.push(evaluate(&recon, d, config.alpha, &options)?);
            if let Some(dir) = workdir {
                save_lf(&recon, &dir.join(format!("{}_recon_{i}", mode.name())), Some(config.train.seed), None)?;
            }
        }
        if let Some(dir) = workdir {
            if mode != AblationMode::Vh {
                for (axis, model) in [("h", &pair.h), ("v", &pair.v)] {
                    let path = dir.join(format!("{}_{axis}.ckpt", mode.name()));
                    save_checkpoint(model, &path, &format!("ablate/{}", mode.name()), config.train.seed, &[])?;
                }
            }
        }
        let n = reports.len() as f64;
        modes.push(ModeResult {
            mode,
            label: mode.label().into(),
            order: mode.order(),
            mean_psnr_db: reports.iter().map(|r| r.mean_psnr_db).sum::<f64>() / n,
            mean_ssim: reports.iter().map(|r| r.mean_ssim).sum::<f64>() / n,
            reports,
            train_secs: pair.secs,
        });
    }
    let score = |m: AblationMode| modes.iter().find(|r| r.mode == m).map(|r| r.mean_psnr_db).unwrap_or(f64::NAN);
    let report = AblationReport {
        alpha: config.alpha,
        seed: config.train.seed,
        iterations: config.train.iterations,
        supervised_at_least_pretrained: score(AblationMode::Supervised) >= score(AblationMode::Pretrained),
        modes,
    };
    if let Some(dir) = workdir {
        write_json(&report, &dir.join("ablation.json"))?;
    }
    Ok(report)
}
