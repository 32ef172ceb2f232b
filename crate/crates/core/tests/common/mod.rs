//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::fmt;

use lfcycle::autodiff::gradcheck::{check_gradients, GradCheck};
use lfcycle::autodiff::{Graph, Tensor, Var};
use lfcycle::lightfield::{AngularAxis, Image, ViewTriplet};
use lfcycle::losses::{
    cycle_loss, perceptual_loss, reconstruction_loss, supervised_loss, FeatureExtractor, SupervisedBatch, SupervisedTriplet,
    TripletBatch,
};
use lfcycle::net::{ArchConfig, InterpolatorModel, Midpoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;
pub const SINGLE_OP_TOL: f64 = 1e-5;
pub const COMPOSED_TOL: f64 = 1e-4;

pub fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn noise_image(size: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::new(size, size, (0..3 * size * size).map(|_| rng.gen_range(0.1..0.9)).collect()).unwrap()
}

pub struct GradCase {
    pub name: &'static str,
    pub tolerance: f64,
    pub result: lfcycle::Result<GradCheck>,
}

impl GradCase {
    pub fn passed(&self) -> bool {
        matches!(&self.result, Ok(r) if r.checked > 0 && r.max_relative_error < self.tolerance)
    }
}

impl fmt::Display for GradCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.result {
            Ok(r) => write!(
                f,
                "{}: max rel err {:.2e} (tol {:.0e}) over {} probes; worst {:?} analytic {:.6e} numeric {:.6e}",
                self.name, r.max_relative_error, self.tolerance, r.checked, r.worst, r.analytic, r.numeric
            ),
            Err(e) => write!(f, "{}: {e}", self.name),
        }
    }
}

fn case<F>(name: &'static str, tolerance: f64, inputs: &[Tensor<f64>], build: F) -> GradCase
where
    F: Fn(&mut Graph<f64>, &[Var]) -> lfcycle::Result<Var>,
{
    GradCase { name, tolerance, result: check_gradients(inputs, build, FD_STEP, 64) }
}

fn sum_sq(g: &mut Graph<f64>, v: Var) -> Var {
    let sq = g.square(v);
    g.sum(sq)
}

const K: usize = 3;

/// Predicts 3-tap kernels with one convolution and filters both frames.
struct TinyInterpolator {
    w: Var,
}

impl Midpoint<f64> for TinyInterpolator {
    fn midpoint(&self, g: &mut Graph<f64>, a: Var, b: Var, _span: usize) -> lfcycle::Result<Var> {
        let x = g.concat(&[a, b], 1)?;
        let k = g.conv2d(x, self.w, None, 1, 1)?;
        let kv = g.narrow(k, 1, 0, K)?;
        let kh = g.narrow(k, 1, K, K)?;
        let fa = g.separable_filter(a, kv, kh)?;
        let fb = g.separable_filter(b, kv, kh)?;
        g.add(fa, fb)
    }
}

fn kernel_weights(seed: u64) -> Tensor<f64> {
    random(&[2 * K, 6, 3, 3], seed).map(|v| 0.3 * v)
}

fn triplets() -> Vec<ViewTriplet> {
    (0..2u64)
        .map(|i| {
            let img = |j: u64| noise_image(8, 10 * i + j);
            ViewTriplet::new(img(0), img(1), img(2), AngularAxis::Horizontal, (0, 1), 2).unwrap()
        })
        .collect()
}

/// Central finite-difference checks of every graph op, the four losses and
/// the interpolator itself, in `f64` on 8x8 frames with K=3.
pub fn gradient_suite() -> Vec<GradCase> {
    let mut cases = Vec::new();
    let conv_in = [random(&[2, 3, 6, 7], 1), random(&[4, 3, 3, 3], 2), random(&[4], 3)];
    for (name, stride, padding) in [("conv2d s1 p1", 1, 1), ("conv2d s2 p1", 2, 1), ("conv2d s1 p0", 1, 0), ("conv2d s2 p0", 2, 0)] {
        cases.push(case(name, SINGLE_OP_TOL, &conv_in, |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), stride, padding)?;
            Ok(sum_sq(g, y))
        }));
    }
    cases.push(case("relu", SINGLE_OP_TOL, &[random(&[2, 2, 4, 4], 5)], |g, v| {
        let y = g.relu(v[0]);
        Ok(sum_sq(g, y))
    }));
    let w = random(&[1, 2, 4, 4], 99);
    cases.push(case("avg_pool2", SINGLE_OP_TOL, &[random(&[1, 2, 8, 8], 6)], |g, v| {
        let p = g.avg_pool2(v[0])?;
        let wv = g.leaf(w.clone());
        let m = g.mul(p, wv)?;
        Ok(g.sum(m))
    }));
    cases.push(case("upsample2", SINGLE_OP_TOL, &[random(&[1, 2, 4, 4], 7)], |g, v| {
        let u = g.upsample2(v[0])?;
        Ok(sum_sq(g, u))
    }));
    cases.push(case("concat", SINGLE_OP_TOL, &[random(&[1, 2, 6, 6], 8), random(&[1, 3, 6, 6], 9)], |g, v| {
        let c = g.concat(&[v[0], v[1]], 1)?;
        Ok(sum_sq(g, c))
    }));
    cases.push(case("narrow", SINGLE_OP_TOL, &[random(&[1, 5, 6, 6], 10)], |g, v| {
        let n = g.narrow(v[0], 1, 1, 3)?;
        Ok(sum_sq(g, n))
    }));
    cases.push(case("crop", SINGLE_OP_TOL, &[random(&[1, 2, 6, 6], 11)], |g, v| {
        let c = g.crop(v[0], 1, 2, 3, 4)?;
        Ok(sum_sq(g, c))
    }));
    let pair = [random(&[3, 4], 12), random(&[3, 4], 13)];
    cases.push(case("add", SINGLE_OP_TOL, &pair, |g, v| {
        let y = g.add(v[0], v[1])?;
        Ok(sum_sq(g, y))
    }));
    cases.push(case("sub", SINGLE_OP_TOL, &pair, |g, v| {
        let y = g.sub(v[0], v[1])?;
        Ok(sum_sq(g, y))
    }));
    cases.push(case("mul", SINGLE_OP_TOL, &pair, |g, v| {
        let y = g.mul(v[0], v[1])?;
        Ok(sum_sq(g, y))
    }));
    cases.push(case("scale / add_scalar", SINGLE_OP_TOL, &pair[..1], |g, v| {
        let s = g.scale(v[0], 0.7);
        let y = g.add_scalar(s, 0.3);
        Ok(sum_sq(g, y))
    }));
    cases.push(case("abs / mean", SINGLE_OP_TOL, &pair[..1], |g, v| {
        let a = g.abs(v[0]);
        Ok(g.mean(a))
    }));
    cases.push(case("replicate_pad", SINGLE_OP_TOL, &[random(&[1, 2, 4, 5], 14)], |g, v| {
        let p = g.replicate_pad(v[0], (2, 1, 0, 3))?;
        Ok(sum_sq(g, p))
    }));
    let sep = [random(&[2, 3, 8, 8], 15), random(&[2, K, 8, 8], 16), random(&[2, K, 8, 8], 17)];
    cases.push(case("separable_filter", SINGLE_OP_TOL, &sep, |g, v| {
        let y = g.separable_filter(v[0], v[1], v[2])?;
        Ok(sum_sq(g, y))
    }));

    let ts = triplets();
    let refs: Vec<&ViewTriplet> = ts.iter().collect();
    cases.push(case("cycle loss", COMPOSED_TOL, &[kernel_weights(20)], |g, v| {
        let batch = TripletBatch::new(g, &refs)?;
        cycle_loss(g, &batch, &TinyInterpolator { w: v[0] })
    }));
    cases.push(case("reconstruction loss", COMPOSED_TOL, &[kernel_weights(21)], |g, v| {
        let batch = TripletBatch::new(g, &refs)?;
        reconstruction_loss(g, &batch, &TinyInterpolator { w: v[0] })
    }));
    let sup: Vec<SupervisedTriplet> = ts
        .iter()
        .enumerate()
        .map(|(i, t)| SupervisedTriplet {
            triplet: t.clone(),
            left_mid: noise_image(8, 50 + i as u64),
            right_mid: noise_image(8, 60 + i as u64),
        })
        .collect();
    let sup_refs: Vec<&SupervisedTriplet> = sup.iter().collect();
    cases.push(case("supervised loss", COMPOSED_TOL, &[kernel_weights(22)], |g, v| {
        let batch = SupervisedBatch::new(g, &sup_refs)?;
        supervised_loss(g, &batch, &TinyInterpolator { w: v[0] })
    }));
    let extractor = FeatureExtractor::seeded(4);
    let target = random(&[1, 3, 8, 8], 31);
    cases.push(case("perceptual loss", COMPOSED_TOL, &[random(&[1, 3, 8, 8], 30)], |g, v| {
        let y = g.leaf(target.clone());
        perceptual_loss(g, v[0], y, &extractor)
    }));

    let model = InterpolatorModel::<f64>::new(ArchConfig::new(vec![4], K).unwrap(), 7).unwrap();
    let (a, b) = (noise_image(8, 70).to_tensor::<f64>(), noise_image(8, 71).to_tensor::<f64>());
    cases.push(case("interpolator mean output", COMPOSED_TOL, model.params(), |g, v| {
        let bound = model.bind_vars(g, v.to_vec())?;
        let (av, bv) = (g.leaf(a.clone()), g.leaf(b.clone()));
        let out = bound.forward(g, av, bv)?;
        Ok(g.mean(out))
    }));
    cases
}
