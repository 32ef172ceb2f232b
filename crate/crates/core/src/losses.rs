//! Self-supervised and supervised training losses.
//!
//! Every norm is a per-element mean, so loss weights do not depend on patch
//! size. For a triplet `(left, center, right)` and interpolator `M`:
//!
//! - cycle: `mean |M(M(left, center), M(center, right)) - center|`
//! - reconstruction: `mean |M(left, right) - center|`
//! - perceptual: `mean (Ψ(cycle output) - Ψ(center))²` on fixed features Ψ
//! - supervised: mean ℓ1 error of `M(left, center)` and `M(center, right)`
//!   against ground-truth intermediate views

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Float, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::lightfield::{Image, ViewTriplet, CHANNELS};
use crate::net::Midpoint;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub cycle: f64,
    pub reconstruction: f64,
    pub perceptual: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { cycle: 1.0, reconstruction: 1.0, perceptual: 0.06 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("cycle", self.cycle), ("reconstruction", self.reconstruction), ("perceptual", self.perceptual)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} loss weight {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// A batch of triplets stacked into `[N, 3, H, W]` graph inputs.
#[derive(Clone, Copy, Debug)]
pub struct TripletBatch {
    pub left: Var,
    pub center: Var,
    pub right: Var,
    pub spacing: usize,
    pub len: usize,
}

impl TripletBatch {
    pub fn new<T: Float>(g: &mut Graph<T>, triplets: &[&ViewTriplet]) -> Result<Self> {
        let first = triplets.first().ok_or_else(|| Error::InvalidArgument("empty triplet batch".into()))?;
        if triplets.iter().any(|t| t.spacing != first.spacing) {
            return Err(Error::InvalidArgument("triplets in one batch must share their spacing".into()));
        }
        let stack = |f: fn(&ViewTriplet) -> &Image| -> Result<Tensor<T>> {
            Image::stack(&triplets.iter().map(|t| f(t)).collect::<Vec<_>>())
        };
        Ok(Self {
            left: g.leaf(stack(|t| &t.left)?),
            center: g.leaf(stack(|t| &t.center)?),
            right: g.leaf(stack(|t| &t.right)?),
            spacing: first.spacing,
            len: triplets.len(),
        })
    }
}

/// Triplet plus the ground-truth views halfway between its neighbours.
#[derive(Clone, Debug, PartialEq)]
pub struct SupervisedTriplet {
    pub triplet: ViewTriplet,
    pub left_mid: Image,
    pub right_mid: Image,
}

pub fn l1_mean<T: Float>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var> {
    let d = g.sub(a, b)?;
    let a = g.abs(d);
    Ok(g.mean(a))
}

pub fn l2_mean<T: Float>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var> {
    let d = g.sub(a, b)?;
    let s = g.square(d);
    Ok(g.mean(s))
}

/// Interpolates `(a[i], b[i])` pairs in a single call by stacking them
/// along the batch axis.
fn paired_midpoints<T: Float, M: Midpoint<T> + ?Sized>(
    g: &mut Graph<T>,
    m: &M,
    pairs: &[(Var, Var)],
    span: usize,
) -> Result<Vec<Var>> {
    let a: Vec<Var> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<Var> = pairs.iter().map(|p| p.1).collect();
    let n = g.shape(a[0])[0];
    let (sa, sb) = (g.concat(&a, 0)?, g.concat(&b, 0)?);
    let mids = m.midpoint(g, sa, sb, span)?;
    (0..pairs.len()).map(|i| g.narrow(mids, 0, i * n, n)).collect()
}

/// The cycle-reconstructed center view `M(M(left, center), M(center, right))`.
pub fn cycle_reconstruct<T: Float, M: Midpoint<T> + ?Sized>(g: &mut Graph<T>, batch: &TripletBatch, m: &M) -> Result<Var> {
    let mids = paired_midpoints(g, m, &[(batch.left, batch.center), (batch.center, batch.right)], batch.spacing)?;
    // the two synthesized views sit half a spacing either side of center
    m.midpoint(g, mids[0], mids[1], batch.spacing)
}

pub fn cycle_loss<T: Float, M: Midpoint<T> + ?Sized>(g: &mut Graph<T>, batch: &TripletBatch, m: &M) -> Result<Var> {
    let cyc = cycle_reconstruct(g, batch, m)?;
    l1_mean(g, cyc, batch.center)
}

/// `M(left, right)` against center; the pair spans two triplet steps.
pub fn reconstruction_loss<T: Float, M: Midpoint<T> + ?Sized>(
    g: &mut Graph<T>,
    batch: &TripletBatch,
    m: &M,
) -> Result<Var> {
    let wide = m.midpoint(g, batch.left, batch.right, 2 * batch.spacing)?;
    l1_mean(g, wide, batch.center)
}

pub fn perceptual_loss<T: Float>(g: &mut Graph<T>, x: Var, y: Var, extractor: &FeatureExtractor) -> Result<Var> {
    if g.shape(x) != g.shape(y) {
        return Err(Error::Shape(format!("perceptual_loss: {:?} vs {:?}", g.shape(x), g.shape(y))));
    }
    let fx = extractor.features(g, x)?;
    let fy = extractor.features(g, y)?;
    l2_mean(g, fx, fy)
}

/// Batch of supervised triplets as graph inputs.
#[derive(Clone, Copy, Debug)]
pub struct SupervisedBatch {
    pub triplets: TripletBatch,
    pub left_mid: Var,
    pub right_mid: Var,
}

impl SupervisedBatch {
    pub fn new<T: Float>(g: &mut Graph<T>, items: &[&SupervisedTriplet]) -> Result<Self> {
        let triplets: Vec<&ViewTriplet> = items.iter().map(|s| &s.triplet).collect();
        let tb = TripletBatch::new(g, &triplets)?;
        let lm = Image::stack(&items.iter().map(|s| &s.left_mid).collect::<Vec<_>>())?;
        let rm = Image::stack(&items.iter().map(|s| &s.right_mid).collect::<Vec<_>>())?;
        if lm.shape() != g.shape(tb.center) || rm.shape() != g.shape(tb.center) {
            return Err(Error::Shape("ground-truth midpoints do not match the triplet views".into()));
        }
        Ok(Self { triplets: tb, left_mid: g.leaf(lm), right_mid: g.leaf(rm) })
    }
}

pub fn supervised_loss<T: Float, M: Midpoint<T> + ?Sized>(g: &mut Graph<T>, batch: &SupervisedBatch, m: &M) -> Result<Var> {
    let tb = &batch.triplets;
    let mids = paired_midpoints(g, m, &[(tb.left, tb.center), (tb.center, tb.right)], tb.spacing)?;
    let el = l1_mean(g, mids[0], batch.left_mid)?;
    let er = l1_mean(g, mids[1], batch.right_mid)?;
    let sum = g.add(el, er)?;
    Ok(g.scale(sum, T::lit(0.5)))
}

/// `λc Lc + λr Lr + λp Lp`.
pub fn total_objective<T: Float>(g: &mut Graph<T>, lc: Var, lr: Var, lp: Var, w: &LossWeights) -> Result<Var> {
    let c = g.scale(lc, T::lit(w.cycle));
    let r = g.scale(lr, T::lit(w.reconstruction));
    let p = g.scale(lp, T::lit(w.perceptual));
    let cr = g.add(c, r)?;
    g.add(cr, p)
}

/// Loss terms of one self-supervised evaluation.
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveTerms {
    pub cycle: Var,
    pub reconstruction: Var,
    pub perceptual: Var,
    pub total: Var,
}

/// All three self-supervised losses and their weighted sum. When `m`
/// ignores the span, the first-stage cycle pairs and the wide pair share
/// one batched call.
pub fn self_supervised_objective<T: Float, M: Midpoint<T> + ?Sized>(
    g: &mut Graph<T>,
    batch: &TripletBatch,
    m: &M,
    extractor: &FeatureExtractor,
    weights: &LossWeights,
    span_invariant: bool,
) -> Result<ObjectiveTerms> {
    let (cyc, wide) = if span_invariant {
        let mids = paired_midpoints(
            g,
            m,
            &[(batch.left, batch.center), (batch.center, batch.right), (batch.left, batch.right)],
            batch.spacing,
        )?;
        (m.midpoint(g, mids[0], mids[1], batch.spacing)?, mids[2])
    } else {
        (cycle_reconstruct(g, batch, m)?, m.midpoint(g, batch.left, batch.right, 2 * batch.spacing)?)
    };
    let cycle = l1_mean(g, cyc, batch.center)?;
    let reconstruction = l1_mean(g, wide, batch.center)?;
    let perceptual = if weights.perceptual > 0.0 {
        perceptual_loss(g, cyc, batch.center, extractor)?
    } else {
        g.leaf(Tensor::scalar(T::zero()))
    };
    let total = total_objective(g, cycle, reconstruction, perceptual, weights)?;
    Ok(ObjectiveTerms { cycle, reconstruction, perceptual, total })
}

/// One conv (+ optional relu, + optional 2×2 average pool) stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStage {
    /// `[C_out, C_in, k, k]`, odd `k`, zero padding `k / 2`.
    pub weight_shape: Vec<usize>,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub relu: bool,
    pub pool: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExtractorOrigin {
    Seeded { seed: u64 },
    Imported { tap_depth: usize, description: String },
}

/// Fixed convolutional feature map Ψ. Weights never change after
/// construction.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor {
    stages: Vec<FeatureStage>,
    origin: ExtractorOrigin,
}

pub const DEFAULT_EXTRACTOR_WIDTHS: [usize; 3] = [8, 16, 16];

impl FeatureExtractor {
    /// Three 3×3 conv + relu + pool stages (widths 8/16/16). Weights are
    /// unit normal draws scaled by `1/sqrt(fan_in)` so activations stay
    /// order one.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c_in = CHANNELS;
        let mut stages = Vec::new();
        for &c_out in &DEFAULT_EXTRACTOR_WIDTHS {
            let fan_in = c_in * 9;
            let scale = 1.0 / (fan_in as f64).sqrt();
            let weight = (0..c_out * fan_in)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (z * scale) as f32
                })
                .collect();
            stages.push(FeatureStage {
                weight_shape: vec![c_out, c_in, 3, 3],
                weight,
                bias: vec![0.0; c_out],
                relu: true,
                pool: true,
            });
            c_in = c_out;
        }
        Self { stages, origin: ExtractorOrigin::Seeded { seed } }
    }

    pub fn from_stages(stages: Vec<FeatureStage>, origin: ExtractorOrigin) -> Result<Self> {
        let mut c_in = CHANNELS;
        for (i, st) in stages.iter().enumerate() {
            let [c_out, sc_in, kh, kw] = st.weight_shape[..] else {
                return Err(Error::Shape(format!("extractor stage {i}: weight shape {:?}", st.weight_shape)));
            };
            if sc_in != c_in || kh != kw || kh % 2 == 0 {
                return Err(Error::Shape(format!(
                    "extractor stage {i}: weight {:?} after {c_in} channels",
                    st.weight_shape
                )));
            }
            if st.weight.len() != c_out * sc_in * kh * kw || st.bias.len() != c_out {
                return Err(Error::Shape(format!("extractor stage {i}: parameter lengths")));
            }
            if st.weight.iter().chain(&st.bias).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("extractor stage {i}")));
            }
            c_in = c_out;
        }
        if stages.is_empty() {
            return Err(Error::InvalidArgument("extractor needs at least one stage".into()));
        }
        Ok(Self { stages, origin })
    }

    /// Single 3×3 stage passing RGB through unchanged (center tap 1).
    pub fn identity(relu: bool, pool: bool) -> Self {
        let mut weight = vec![0.0; CHANNELS * CHANNELS * 9];
        for c in 0..CHANNELS {
            weight[(c * CHANNELS + c) * 9 + 4] = 1.0;
        }
        let stage = FeatureStage { weight_shape: vec![CHANNELS, CHANNELS, 3, 3], weight, bias: vec![0.0; CHANNELS], relu, pool };
        Self::from_stages(vec![stage], ExtractorOrigin::Imported { tap_depth: 1, description: "identity".into() })
            .expect("identity extractor is valid")
    }

    pub fn stages(&self) -> &[FeatureStage] {
        &self.stages
    }

    pub fn origin(&self) -> &ExtractorOrigin {
        &self.origin
    }

    /// Final-stage features of `[N, 3, H, W]` images.
    pub fn features<T: Float>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let mut h = x;
        for st in &self.stages {
            let w = g.leaf(Tensor::new(&st.weight_shape, st.weight.iter().map(|&v| T::from_f32(v).unwrap()).collect())?);
            let b = g.leaf(Tensor::new(&[st.bias.len()], st.bias.iter().map(|&v| T::from_f32(v).unwrap()).collect())?);
            h = g.conv2d(h, w, Some(b), 1, st.weight_shape[2] / 2)?;
            if st.relu {
                h = g.relu(h);
            }
            if st.pool {
                h = g.avg_pool2(h)?;
            }
        }
        Ok(h)
    }
}
