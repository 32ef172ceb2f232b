//! Generic two-frame pretraining on procedurally generated translated
//! pairs. It stands in for training on natural video frame triplets.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schedule::{PlateauScheduler, SchedulerConfig};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph};
use crate::error::{Error, Result};
use crate::lightfield::Image;
use crate::losses::l1_mean;
use crate::net::{self, ArchConfig, InterpolatorModel};
use crate::synth::noise_texture;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub arch: ArchConfig,
    pub iterations: usize,
    pub batch_size: usize,
    pub patch_size: usize,
    pub lr: f64,
    /// Largest per-frame displacement; the two frames sit at `-v` and `+v`
    /// around the target, with each component of `v` drawn from
    /// `-max_half_shift..=max_half_shift`.
    pub max_half_shift: usize,
    pub blur_range: (f64, f64),
    pub scheduler: SchedulerConfig,
    /// A warning is raised when the mean loss of the last scheduler window
    /// is above this.
    pub target_loss: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            arch: ArchConfig::default(),
            iterations: 2000,
            batch_size: 8,
            patch_size: 64,
            lr: 1e-3,
            max_half_shift: 1,
            blur_range: (0.7, 2.5),
            scheduler: SchedulerConfig::default(),
            target_loss: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub model: InterpolatorModel<f32>,
    pub history: Vec<f64>,
    pub final_loss: Option<f64>,
    pub wall_clock_secs: f64,
    /// Set when the model should not be trusted as a baseline.
    pub warning: Option<String>,
}

/// A pair of frames displaced symmetrically around a target frame.
#[derive(Clone, Debug)]
pub struct ShiftedPair {
    pub first: Image,
    pub second: Image,
    pub target: Image,
    pub half_shift: (isize, isize),
}

pub fn shifted_pair(size: usize, max_half_shift: usize, blur_range: (f64, f64), rng: &mut impl Rng) -> Result<ShiftedPair> {
    let m = max_half_shift as isize;
    let blur = if blur_range.1 > blur_range.0 { rng.gen_range(blur_range.0..blur_range.1) } else { blur_range.0 };
    let canvas = noise_texture(size + 2 * max_half_shift, size + 2 * max_half_shift, blur, rng)?;
    let (dy, dx) = (rng.gen_range(-m..=m), rng.gen_range(-m..=m));
    let at = |oy: isize, ox: isize| canvas.crop((m + oy) as usize, (m + ox) as usize, size, size);
    Ok(ShiftedPair { first: at(dy, dx)?, second: at(-dy, -dx)?, target: at(0, 0)?, half_shift: (dy, dx) })
}

fn pair_batch(config: &PretrainConfig, rng: &mut impl Rng) -> Result<Vec<ShiftedPair>> {
    (0..config.batch_size).map(|_| shifted_pair(config.patch_size, config.max_half_shift, config.blur_range, rng)).collect()
}

/// Trains a fresh model to predict the target of shifted pairs.
pub fn pretrain_baseline(config: &PretrainConfig) -> Result<PretrainOutcome> {
    config.arch.validate()?;
    if !config.patch_size.is_multiple_of(config.arch.size_multiple()) {
        return Err(Error::InvalidArgument(format!(
            "pretrain patch size {} is not a multiple of {}",
            config.patch_size,
            config.arch.size_multiple()
        )));
    }
    let started = Instant::now();
    let mut model = InterpolatorModel::<f32>::new(config.arch.clone(), config.seed)?;
    if config.iterations == 0 {
        return Ok(PretrainOutcome {
            model,
            history: Vec::new(),
            final_loss: None,
            wall_clock_secs: 0.0,
            warning: Some("pretraining ran for zero iterations: the baseline is an untrained network".into()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x005e_ed0f_fa1e);
    let mut adam = AdamState::new();
    let mut scheduler = PlateauScheduler::new(config.lr, config.scheduler);
    let mut history = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let pairs = pair_batch(config, &mut rng)?;
        let stack = |f: fn(&ShiftedPair) -> &Image| Image::stack::<f32>(&pairs.iter().map(f).collect::<Vec<_>>());
        let mut g = Graph::new();
        let (a, b, t) = (g.leaf(stack(|p| &p.first)?), g.leaf(stack(|p| &p.second)?), g.leaf(stack(|p| &p.target)?));
        let bound = model.bind(&mut g, true);
        let out = bound.forward(&mut g, a, b)?;
        let loss = l1_mean(&mut g, out, t)?;
        let value = f64::from(g.value(loss).item()?);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("pretraining loss at iteration {it}")));
        }
        let vars = bound.param_vars().to_vec();
        g.backward(loss)?;
        let grads: Vec<_> = vars.iter().map(|&v| g.take_grad(v)).collect();
        let lr = scheduler.lr();
        adam_step(model.params_mut(), &grads, &mut adam, &AdamConfig { lr, ..Default::default() })?;
        history.push(value);
        scheduler.observe(value);
    }
    let tail = config.scheduler.window.clamp(1, history.len());
    let final_loss = history[history.len() - tail..].iter().sum::<f64>() / tail as f64;
    let warning = (final_loss > config.target_loss)
        .then(|| format!("pretraining ended at loss {final_loss:.4}, above the target {}", config.target_loss));
    Ok(PretrainOutcome {
        model,
        history,
        final_loss: Some(final_loss),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        warning,
    })
}

/// Mean absolute error of the model's midpoint on `count` fresh pairs,
/// ignoring a border of `margin` pixels.
pub fn held_out_pair_error(
    model: &InterpolatorModel<f32>,
    config: &PretrainConfig,
    count: usize,
    margin: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut total, mut n) = (0.0f64, 0usize);
    for _ in 0..count {
        let p = shifted_pair(config.patch_size, config.max_half_shift, config.blur_range, &mut rng)?;
        let out = net::interpolate(&p.first, &p.second, model)?;
        let s = config.patch_size;
        for c in 0..3 {
            for y in margin..s - margin {
                for x in margin..s - margin {
                    total += f64::from((out.get(y, x, c) - p.target.get(y, x, c)).abs());
                    n += 1;
                }
            }
        }
    }
    Ok(total / n.max(1) as f64)
}
