//! Fine-tuning an interpolator on the sparse views of light fields.
//!
//! Each iteration draws `batch_size` triplet patches (a light field chosen
//! uniformly, then a triplet and crop within it), evaluates the objective
//! of the selected [`TrainMode`] and takes one Adam step. The plateau
//! scheduler halves the rate when a window of iterations stops improving.

mod patches;
mod pretrain;
mod schedule;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use patches::{
    crop_plan, disparity_screen, estimate_shift, sample_patch_triplet, CropPlan, PatchScreen, PatchWindow, SampledPatch,
};
pub use pretrain::{held_out_pair_error, pretrain_baseline, shifted_pair, PretrainConfig, PretrainOutcome, ShiftedPair};
pub use schedule::{lr_schedule_step, PlateauScheduler, SchedulerConfig};

use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph};
use crate::error::{Error, Result};
use crate::lightfield::{AngularAxis, LightField};
use crate::losses::{
    reconstruction_loss, self_supervised_objective, supervised_loss, FeatureExtractor, LossWeights, SupervisedBatch,
    SupervisedTriplet, TripletBatch,
};
use crate::net::{InterpolatorModel, ModelAxis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// Cycle, reconstruction and perceptual losses on sparse views only.
    SelfSupervised,
    /// Reconstruction loss alone.
    NoCycle,
    /// ℓ1 against ground-truth intermediate views of the dense grid.
    Supervised,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self" | "self-supervised" => Ok(Self::SelfSupervised),
            "no-cycle" => Ok(Self::NoCycle),
            "supervised" => Ok(Self::Supervised),
            other => Err(Error::InvalidArgument(format!("unknown training mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub coarse_crop: usize,
    pub fine_crop: usize,
    /// Crops used instead when the views are smaller than `coarse_crop`.
    pub desk_crops: (usize, usize),
    pub disparity_threshold: f64,
    pub max_screen_shift: usize,
    pub max_patch_attempts: usize,
    pub weights: LossWeights,
    pub scheduler: SchedulerConfig,
    pub mode: TrainMode,
    pub seed: u64,
    /// Perceptual feature extractor; a seeded one is built when absent.
    pub extractor: Option<FeatureExtractor>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 8,
            iterations: 5000,
            coarse_crop: 150,
            fine_crop: 128,
            desk_crops: (96, 64),
            disparity_threshold: 1.0,
            max_screen_shift: 8,
            max_patch_attempts: 50,
            weights: LossWeights::default(),
            scheduler: SchedulerConfig::default(),
            mode: TrainMode::SelfSupervised,
            seed: 0,
            extractor: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.lr)));
        }
        self.weights.validate()?;
        match self.mode {
            TrainMode::NoCycle if self.weights.reconstruction == 0.0 => Err(Error::InvalidArgument(
                "no-cycle training with a zero reconstruction weight has no objective".into(),
            )),
            TrainMode::SelfSupervised
                if self.weights.cycle == 0.0 && self.weights.reconstruction == 0.0 && self.weights.perceptual == 0.0 =>
            {
                Err(Error::InvalidArgument("all loss weights are zero".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Training light fields. Dense grids are only handed out through
/// [`TrainingData::dense`], which counts every access.
#[derive(Debug)]
pub struct TrainingData {
    sparse: Vec<LightField>,
    dense: Option<Vec<LightField>>,
    dense_reads: AtomicUsize,
}

impl TrainingData {
    pub fn new(sparse: Vec<LightField>) -> Result<Self> {
        if sparse.is_empty() {
            return Err(Error::InvalidArgument("no training light fields".into()));
        }
        let spacing = sparse[0].provenance().spacing();
        let size = sparse[0].view_size();
        if sparse.iter().any(|lf| lf.provenance().spacing() != spacing || lf.view_size() != size) {
            return Err(Error::InvalidArgument("training light fields must share view size and angular spacing".into()));
        }
        Ok(Self { sparse, dense: None, dense_reads: AtomicUsize::new(0) })
    }

    /// Pairs every sparse field with the dense grid it was sub-sampled
    /// from, for supervised training.
    pub fn with_ground_truth(sparse: Vec<LightField>, dense: Vec<LightField>) -> Result<Self> {
        let data = Self::new(sparse)?;
        if dense.len() != data.sparse.len() {
            return Err(Error::InvalidArgument(format!(
                "{} sparse fields but {} ground-truth fields",
                data.sparse.len(),
                dense.len()
            )));
        }
        for (s, d) in data.sparse.iter().zip(&dense) {
            let ratio = s.provenance().spacing() / d.provenance().spacing().max(1);
            let fits = ratio >= 2
                && ratio % 2 == 0
                && s.view_size() == d.view_size()
                && d.rows() == ratio * (s.rows() - 1) + 1
                && d.cols() == ratio * (s.cols() - 1) + 1;
            if !fits {
                return Err(Error::InvalidArgument(format!(
                    "ground truth {}x{} does not match a {}x{} field sub-sampled by an even factor",
                    d.rows(),
                    d.cols(),
                    s.rows(),
                    s.cols()
                )));
            }
        }
        Ok(Self { dense: Some(dense), ..data })
    }

    pub fn sparse(&self) -> &[LightField] {
        &self.sparse
    }

    pub fn dense(&self) -> Option<&[LightField]> {
        self.dense_reads.fetch_add(1, Ordering::Relaxed);
        self.dense.as_deref()
    }

    pub fn dense_reads(&self) -> usize {
        self.dense_reads.load(Ordering::Relaxed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub total: f64,
    pub cycle: Option<f64>,
    pub reconstruction: Option<f64>,
    pub perceptual: Option<f64>,
    pub supervised: Option<f64>,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: TrainMode,
    pub axis: AngularAxis,
    pub seed: u64,
    pub history: Vec<IterationRecord>,
    pub patches_accepted: usize,
    pub patches_rejected: usize,
    pub crop: CropPlan,
    pub wall_clock_secs: f64,
    pub notes: Vec<String>,
}

impl TrainReport {
    /// Mean total loss over the last `n` iterations.
    pub fn tail_loss(&self, n: usize) -> Option<f64> {
        let n = n.min(self.history.len());
        (n > 0).then(|| self.history[self.history.len() - n..].iter().map(|r| r.total).sum::<f64>() / n as f64)
    }
}

enum Batch {
    Plain(Vec<SampledPatch>),
    Supervised(Vec<SupervisedTriplet>),
}

fn draw_batch(
    fields: &[&LightField],
    dense: Option<&[&LightField]>,
    axis: AngularAxis,
    plan: CropPlan,
    screen: PatchScreen,
    n: usize,
    rng: &mut ChaCha8Rng,
    rejected: &mut usize,
) -> Result<Batch> {
    let mut plain = Vec::with_capacity(n);
    let mut supervised = Vec::new();
    for _ in 0..n {
        let i = rng.gen_range(0..fields.len());
        let p = sample_patch_triplet(fields[i], axis, plan, screen, rng)?;
        *rejected += p.rejected;
        if let Some(dense) = dense {
            let d = dense[i];
            let ratio = fields[i].provenance().spacing() / d.provenance().spacing();
            let w = p.window;
            let (line, pos) = (ratio * w.line, ratio * w.pos);
            let mid = |q: usize| d.view_along(axis, line, q).crop(w.top, w.left, w.size, w.size);
            supervised.push(SupervisedTriplet {
                left_mid: mid(pos - ratio / 2)?,
                right_mid: mid(pos + ratio / 2)?,
                triplet: p.triplet,
            });
        } else {
            plain.push(p);
        }
    }
    Ok(if dense.is_some() { Batch::Supervised(supervised) } else { Batch::Plain(plain) })
}

/// Fine-tunes `model` along `axis` and returns the tuned copy with a
/// report. Runs with identical inputs and seed are bit-identical.
pub fn finetune(
    model: &InterpolatorModel<f32>,
    data: &TrainingData,
    axis: AngularAxis,
    config: &TrainConfig,
) -> Result<(InterpolatorModel<f32>, TrainReport)> {
    config.validate()?;
    let started = Instant::now();
    let fields: Vec<&LightField> = data.sparse().iter().filter(|lf| lf.extent(axis) >= 3).collect();
    if fields.is_empty() {
        return Err(Error::Training(format!("no light field has three or more views along the {axis} axis")));
    }
    let dense: Option<Vec<&LightField>> = match config.mode {
        TrainMode::Supervised => {
            let all = data
                .dense()
                .ok_or_else(|| Error::InvalidArgument("supervised training needs ground-truth dense fields".into()))?;
            Some(data.sparse().iter().zip(all).filter(|(s, _)| s.extent(axis) >= 3).map(|(_, d)| d).collect())
        }
        _ => None,
    };

    let s = &config.scheduler;
    let mut notes = vec![
        format!("{axis} triplets only; the other axis is a separate run from the same starting model"),
        format!("{} iterations of batch {}", config.iterations, config.batch_size),
        format!(
            "lr scaled by {} when the mean over {} iterations improves by less than {}%, floor {}",
            s.factor,
            s.window,
            100.0 * s.min_improvement,
            s.min_lr
        ),
    ];
    let plan = crop_plan(
        fields[0].view_size(),
        config.coarse_crop,
        config.fine_crop,
        config.desk_crops,
        model.config().size_multiple(),
    )?;
    if plan.shrunk {
        notes.push(format!("crops reduced to coarse {} / fine {} to fit the views", plan.coarse, plan.fine));
    }
    if fields.len() < data.sparse().len() {
        notes.push(format!("{} light fields skipped: fewer than three views along the axis", data.sparse().len() - fields.len()));
    }
    let screen = PatchScreen {
        threshold: config.disparity_threshold,
        max_shift: config.max_screen_shift,
        max_attempts: config.max_patch_attempts,
    };
    let extractor = config.extractor.clone().unwrap_or_else(|| FeatureExtractor::seeded(config.seed.wrapping_add(17)));
    let weights = match config.mode {
        TrainMode::NoCycle => LossWeights { cycle: 0.0, perceptual: 0.0, ..config.weights },
        _ => config.weights,
    };

    let mut tuned = model.clone();
    tuned.set_axis(ModelAxis::from(axis));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new();
    let mut scheduler = PlateauScheduler::new(config.lr, config.scheduler);
    let mut history = Vec::with_capacity(config.iterations);
    let mut rejected = 0;

    for it in 0..config.iterations {
        let batch = draw_batch(&fields, dense.as_deref(), axis, plan, screen, config.batch_size, &mut rng, &mut rejected)?;
        let lr = scheduler.lr();
        let mut g = Graph::new();
        let bound = tuned.bind(&mut g, true);
        let (total, mut record) = match &batch {
            Batch::Plain(patches) => {
                let triplets: Vec<_> = patches.iter().map(|p| &p.triplet).collect();
                let tb = TripletBatch::new(&mut g, &triplets)?;
                if config.mode == TrainMode::NoCycle {
                    let r = reconstruction_loss(&mut g, &tb, &bound)?;
                    let total = g.scale(r, weights.reconstruction as f32);
                    let rv = f64::from(g.value(r).item()?);
                    (total, IterationRecord { total: 0.0, cycle: None, reconstruction: Some(rv), perceptual: None, supervised: None, lr })
                } else {
                    let terms = self_supervised_objective(&mut g, &tb, &bound, &extractor, &weights, true)?;
                    let v = |x| g.value(x).item().map(f64::from);
                    let record = IterationRecord {
                        total: 0.0,
                        cycle: Some(v(terms.cycle)?),
                        reconstruction: Some(v(terms.reconstruction)?),
                        perceptual: Some(v(terms.perceptual)?),
                        supervised: None,
                        lr,
                    };
                    (terms.total, record)
                }
            }
            Batch::Supervised(items) => {
                let refs: Vec<_> = items.iter().collect();
                let sb = SupervisedBatch::new(&mut g, &refs)?;
                let s = supervised_loss(&mut g, &sb, &bound)?;
                let sv = f64::from(g.value(s).item()?);
                (s, IterationRecord { total: 0.0, cycle: None, reconstruction: None, perceptual: None, supervised: Some(sv), lr })
            }
        };
        record.total = f64::from(g.value(total).item()?);
        if !record.total.is_finite() {
            return Err(Error::Training(format!("loss became non-finite at iteration {it}; training aborted")));
        }
        let vars = bound.param_vars().to_vec();
        g.backward(total)?;
        let grads: Vec<_> = vars.iter().map(|&v| g.take_grad(v)).collect();
        if grads.iter().any(|t| !t.is_finite()) {
            return Err(Error::Training(format!("non-finite gradient at iteration {it}; training aborted")));
        }
        adam_step(tuned.params_mut(), &grads, &mut adam, &AdamConfig { lr, ..Default::default() })?;
        history.push(record);
        scheduler.observe(record.total);
    }

    let report = TrainReport {
        mode: config.mode,
        axis,
        seed: config.seed,
        patches_accepted: history.len() * config.batch_size,
        patches_rejected: rejected,
        history,
        crop: plan,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        notes,
    };
    Ok((tuned, report))
}
