//! The kernel-predicting view interpolator.
//!
//! Two frames are concatenated channel-wise and passed through a U-shaped
//! encoder-decoder (3×3 conv blocks, 2×2 average pooling on the way down,
//! bilinear ×2 upsampling plus skip concatenation on the way up). Four
//! heads predict, for every pixel, a vertical and a horizontal 1D kernel for
//! each frame. The midpoint is the sum of both frames filtered by their
//! per-pixel separable kernels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Float, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::lightfield::{AngularAxis, Image};

/// Architecture hyper-parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Channel width of each encoder level; the decoder mirrors them.
    pub widths: Vec<usize>,
    /// Length of every predicted 1D kernel (odd, at least 3).
    pub kernel_size: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { widths: vec![16, 32, 64], kernel_size: 13 }
    }
}

impl ArchConfig {
    pub fn new(widths: Vec<usize>, kernel_size: usize) -> Result<Self> {
        let cfg = Self { widths, kernel_size };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size < 3 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("kernel size {} must be odd and >= 3", self.kernel_size)));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid level widths {:?}", self.widths)));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.widths.len()
    }

    /// Frame sizes must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.levels()
    }

    /// Names and shapes of all parameters in canonical order.
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut specs = Vec::new();
        let mut conv = |name: String, c_in: usize, c_out: usize| {
            specs.push((format!("{name}.weight"), vec![c_out, c_in, 3, 3]));
            specs.push((format!("{name}.bias"), vec![c_out]));
        };
        let mut c_in = 2 * crate::lightfield::CHANNELS;
        for (l, &w) in self.widths.iter().enumerate() {
            conv(format!("enc{l}.conv0"), c_in, w);
            conv(format!("enc{l}.conv1"), w, w);
            c_in = w;
        }
        conv("bottleneck".into(), c_in, c_in);
        for l in (0..self.levels()).rev() {
            let w = self.widths[l];
            conv(format!("dec{l}.conv0"), c_in + w, w);
            c_in = w;
        }
        for head in HEADS {
            conv(format!("head.{head}.conv0"), c_in, c_in);
            conv(format!("head.{head}.conv1"), c_in, self.kernel_size);
        }
        specs
    }

    pub fn param_count(&self) -> usize {
        self.param_specs().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

/// Head order: frame A vertical, frame A horizontal, frame B vertical,
/// frame B horizontal.
pub const HEADS: [&str; 4] = ["k1v", "k1h", "k2v", "k2h"];

fn is_head_output(name: &str) -> bool {
    name.starts_with("head.") && name.contains(".conv1.")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelAxis {
    Horizontal,
    Vertical,
    Generic,
}

impl From<AngularAxis> for ModelAxis {
    fn from(a: AngularAxis) -> Self {
        match a {
            AngularAxis::Horizontal => Self::Horizontal,
            AngularAxis::Vertical => Self::Vertical,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterpolatorModel<T> {
    config: ArchConfig,
    axis: ModelAxis,
    names: Vec<String>,
    params: Vec<Tensor<T>>,
}

impl<T: Float> InterpolatorModel<T> {
    /// Seeded He-normal initialization. Kernel heads start close to a
    /// center tap of `sqrt(0.5)`, so a fresh model averages its inputs.
    pub fn new(config: ArchConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = config.kernel_size / 2;
        let mut names = Vec::new();
        let mut params = Vec::new();
        for (name, shape) in config.param_specs() {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = if name.ends_with(".weight") {
                let fan_in: usize = shape[1..].iter().product();
                let gain = if is_head_output(&name) { 0.1 } else { 1.0 };
                let std = gain * (2.0 / fan_in as f64).sqrt();
                (0..n).map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    std * z
                }).collect()
            } else if is_head_output(&name) {
                (0..n).map(|i| if i == center { 0.5f64.sqrt() } else { 0.0 }).collect()
            } else {
                vec![0.0; n]
            };
            names.push(name);
            params.push(Tensor::new(&shape, data.into_iter().map(T::lit).collect())?);
        }
        Ok(Self { config, axis: ModelAxis::Generic, names, params })
    }

    /// Rebuilds a model from parameters in canonical order.
    pub fn from_params(config: ArchConfig, axis: ModelAxis, params: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let specs = config.param_specs();
        if specs.len() != params.len() {
            return Err(Error::Shape(format!("model needs {} tensors, got {}", specs.len(), params.len())));
        }
        for ((name, shape), p) in specs.iter().zip(&params) {
            if p.shape() != shape.as_slice() {
                return Err(Error::Shape(format!("{name}: expected {shape:?}, got {:?}", p.shape())));
            }
            if !p.is_finite() {
                return Err(Error::NonFinite(name.clone()));
            }
        }
        let names = specs.into_iter().map(|(n, _)| n).collect();
        Ok(Self { config, axis, names, params })
    }

    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn axis(&self) -> ModelAxis {
        self.axis
    }

    pub fn set_axis(&mut self, axis: ModelAxis) {
        self.axis = axis;
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.params[i])
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(Tensor::is_finite)
    }

    pub fn cast<U: Float>(&self) -> InterpolatorModel<U> {
        InterpolatorModel {
            config: self.config.clone(),
            axis: self.axis,
            names: self.names.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    /// Registers the parameters in `g`. With `trainable` set their
    /// gradients are recorded.
    pub fn bind<'m>(&'m self, g: &mut Graph<T>, trainable: bool) -> BoundModel<'m, T> {
        let vars = self
            .params
            .iter()
            .map(|p| if trainable { g.param(p.clone()) } else { g.leaf(p.clone()) })
            .collect();
        BoundModel { model: self, vars }
    }

    /// Uses existing graph variables as the parameters, in
    /// [`Self::param_names`] order. Gradient checks drive the model this way.
    pub fn bind_vars<'m>(&'m self, g: &Graph<T>, vars: Vec<Var>) -> Result<BoundModel<'m, T>> {
        if vars.len() != self.params.len() || vars.iter().zip(&self.params).any(|(v, p)| g.shape(*v) != p.shape()) {
            return Err(Error::Shape(format!("bind_vars: expected {} parameters matching the architecture", self.params.len())));
        }
        Ok(BoundModel { model: self, vars })
    }
}

/// Per-pixel kernel maps, each `[N, K, H, W]`.
#[derive(Clone, Copy, Debug)]
pub struct KernelVars {
    pub k1v: Var,
    pub k1h: Var,
    pub k2v: Var,
    pub k2h: Var,
}

/// A model whose parameters live in a graph.
pub struct BoundModel<'m, T> {
    model: &'m InterpolatorModel<T>,
    vars: Vec<Var>,
}

impl<T: Float> BoundModel<'_, T> {
    pub fn param_vars(&self) -> &[Var] {
        &self.vars
    }

    fn conv_relu(&self, g: &mut Graph<T>, x: Var, idx: &mut usize, relu: bool) -> Result<Var> {
        let (w, b) = (self.vars[*idx], self.vars[*idx + 1]);
        *idx += 2;
        let y = g.conv2d(x, w, Some(b), 1, 1)?;
        Ok(if relu { g.relu(y) } else { y })
    }

    /// Predicts the four kernel maps for frames `a`, `b` (`[N, 3, H, W]`).
    pub fn kernels(&self, g: &mut Graph<T>, a: Var, b: Var) -> Result<KernelVars> {
        let cfg = &self.model.config;
        let (_, _, h, w) = g.value(a).dims4()?;
        if g.shape(a) != g.shape(b) {
            return Err(Error::Shape(format!("frames {:?} vs {:?}", g.shape(a), g.shape(b))));
        }
        let m = cfg.size_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(Error::Shape(format!(
                "frame size {h}x{w} is not divisible by {m} for {} pooling levels; pad the frames to a multiple of {m}",
                cfg.levels()
            )));
        }
        let mut idx = 0;
        let mut x = g.concat(&[a, b], 1)?;
        let mut skips = Vec::with_capacity(cfg.levels());
        for _ in 0..cfg.levels() {
            x = self.conv_relu(g, x, &mut idx, true)?;
            x = self.conv_relu(g, x, &mut idx, true)?;
            skips.push(x);
            x = g.avg_pool2(x)?;
        }
        x = self.conv_relu(g, x, &mut idx, true)?;
        for skip in skips.into_iter().rev() {
            let up = g.upsample2(x)?;
            let cat = g.concat(&[up, skip], 1)?;
            x = self.conv_relu(g, cat, &mut idx, true)?;
        }
        let mut heads = [x; 4];
        for head in heads.iter_mut() {
            let hidden = self.conv_relu(g, x, &mut idx, true)?;
            *head = self.conv_relu(g, hidden, &mut idx, false)?;
        }
        debug_assert_eq!(idx, self.vars.len());
        Ok(KernelVars { k1v: heads[0], k1h: heads[1], k2v: heads[2], k2h: heads[3] })
    }

    /// Unclamped midpoint `a ∘ (k1v, k1h) + b ∘ (k2v, k2h)`.
    pub fn forward(&self, g: &mut Graph<T>, a: Var, b: Var) -> Result<Var> {
        let k = self.kernels(g, a, b)?;
        let fa = g.separable_filter(a, k.k1v, k.k1h)?;
        let fb = g.separable_filter(b, k.k2v, k.k2h)?;
        let out = g.add(fa, fb)?;
        if !g.value(out).is_finite() {
            return Err(Error::NonFinite("interpolator output".into()));
        }
        Ok(out)
    }
}

/// Anything that can synthesize, inside a graph, the view halfway between
/// two frames that lie `span` dense angular steps apart.
pub trait Midpoint<T: Float> {
    fn midpoint(&self, g: &mut Graph<T>, a: Var, b: Var, span: usize) -> Result<Var>;
}

impl<T: Float> Midpoint<T> for BoundModel<'_, T> {
    fn midpoint(&self, g: &mut Graph<T>, a: Var, b: Var, _span: usize) -> Result<Var> {
        self.forward(g, a, b)
    }
}

/// Image-level interpolation, used by the reconstructor.
pub trait Interpolator: Sync {
    fn interpolate(&self, a: &Image, b: &Image, span: usize) -> Result<Image>;
}

impl Interpolator for InterpolatorModel<f32> {
    fn interpolate(&self, a: &Image, b: &Image, _span: usize) -> Result<Image> {
        interpolate(a, b, self)
    }
}

/// Kernel maps predicted for a single frame pair. Each map is stored
/// `[K, H, W]`; [`KernelField::at`] reads it as `(y, x, i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelField {
    pub height: usize,
    pub width: usize,
    pub kernel_size: usize,
    pub k1v: Tensor<f32>,
    pub k1h: Tensor<f32>,
    pub k2v: Tensor<f32>,
    pub k2h: Tensor<f32>,
}

impl KernelField {
    /// `(h, w, K)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.kernel_size)
    }

    pub fn at(map: &Tensor<f32>, y: usize, x: usize, i: usize) -> f32 {
        let s = map.shape();
        map.data()[(i * s[2] + y) * s[3] + x]
    }
}

pub fn predict_kernels(a: &Image, b: &Image, model: &InterpolatorModel<f32>) -> Result<KernelField> {
    if a.size() != b.size() {
        return Err(Error::Shape(format!("frames {:?} vs {:?}", a.size(), b.size())));
    }
    let mut g = Graph::new();
    let bound = model.bind(&mut g, false);
    let (va, vb) = (g.leaf(a.to_tensor()), g.leaf(b.to_tensor()));
    let k = bound.kernels(&mut g, va, vb)?;
    let (h, w) = a.size();
    let kk = model.config().kernel_size;
    let take = |v: Var| g.value(v).clone().reshape(&[1, kk, h, w]);
    Ok(KernelField {
        height: h,
        width: w,
        kernel_size: kk,
        k1v: take(k.k1v)?,
        k1h: take(k.k1h)?,
        k2v: take(k.k2v)?,
        k2h: take(k.k2h)?,
    })
}

/// Filters `frame` with per-pixel separable kernels (`[1, K, H, W]` maps),
/// replicating the border. The result is clamped to `[0, 1]`.
pub fn apply_separable(frame: &Image, kv: &Tensor<f32>, kh: &Tensor<f32>) -> Result<Image> {
    let mut g = Graph::<f32>::new();
    let f = g.leaf(frame.to_tensor());
    let (v, h) = (g.leaf(kv.clone()), g.leaf(kh.clone()));
    let out = g.separable_filter(f, v, h)?;
    Image::from_tensor(g.value(out), 0)
}

/// Synthesizes the midpoint of two frames, clamped to `[0, 1]`.
pub fn interpolate(a: &Image, b: &Image, model: &InterpolatorModel<f32>) -> Result<Image> {
    if a.size() != b.size() {
        return Err(Error::Shape(format!("frames {:?} vs {:?}", a.size(), b.size())));
    }
    let mut g = Graph::new();
    let bound = model.bind(&mut g, false);
    let (va, vb) = (g.leaf(a.to_tensor()), g.leaf(b.to_tensor()));
    let out = bound.forward(&mut g, va, vb)?;
    Image::from_tensor(g.value(out), 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_image(h: usize, w: usize, seed: u64) -> Image {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(h, w, (0..3 * h * w).map(|_| rng.gen::<f32>()).collect()).unwrap()
    }

    fn one_hot(k: usize, h: usize, w: usize, index: usize, value: f32) -> Tensor<f32> {
        let mut t = Tensor::zeros(&[1, k, h, w]);
        t.data_mut()[index * h * w..(index + 1) * h * w].fill(value);
        t
    }

    #[test]
    fn kernel_field_shapes() {
        let model = InterpolatorModel::<f32>::new(ArchConfig::default(), 3).unwrap();
        let a = noise_image(32, 32, 1);
        let b = noise_image(32, 32, 2);
        let kf = predict_kernels(&a, &b, &model).unwrap();
        assert_eq!(kf.dims(), (32, 32, 13));
        for map in [&kf.k1v, &kf.k1h, &kf.k2v, &kf.k2h] {
            assert_eq!(map.shape(), &[1, 13, 32, 32]);
            assert!(map.is_finite());
        }
        let again = InterpolatorModel::<f32>::new(ArchConfig::default(), 3).unwrap();
        assert_eq!(predict_kernels(&a, &b, &again).unwrap(), kf);
    }

    #[test]
    fn indivisible_frames_ask_for_padding() {
        let model = InterpolatorModel::<f32>::new(ArchConfig::default(), 0).unwrap();
        let a = noise_image(30, 32, 1);
        let err = predict_kernels(&a, &a, &model).unwrap_err().to_string();
        assert!(err.contains("pad"), "{err}");
    }

    #[test]
    fn invalid_kernel_size_rejected() {
        assert!(ArchConfig::new(vec![8], 4).is_err());
        assert!(ArchConfig::new(vec![8], 1).is_err());
        assert!(ArchConfig::new(vec![], 3).is_err());
    }

    #[test]
    fn one_hot_center_is_identity() {
        let img = noise_image(6, 7, 4);
        let c = one_hot(5, 6, 7, 2, 1.0);
        let out = apply_separable(&img, &c, &c).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn shifted_one_hot_translates() {
        let img = noise_image(8, 9, 5);
        let v = one_hot(5, 8, 9, 2, 1.0);
        // horizontal tap index 3 samples x + 1
        let h = one_hot(5, 8, 9, 3, 1.0);
        let out = apply_separable(&img, &v, &h).unwrap();
        for c in 0..3 {
            for y in 0..8 {
                for x in 0..8 {
                    assert_eq!(out.get(y, x, c), img.get(y, x + 1, c));
                }
            }
        }
    }

    #[test]
    fn uniform_kernels_preserve_constants() {
        let img = Image::constant(7, 7, [0.3, 0.6, 0.9]).unwrap();
        let u = Tensor::full(&[1, 5, 7, 7], 0.2f32);
        let out = apply_separable(&img, &u, &u).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn half_scaled_center_heads_reproduce_equal_inputs() {
        let cfg = ArchConfig::new(vec![4, 4], 5).unwrap();
        let mut model = InterpolatorModel::<f32>::new(cfg, 9).unwrap();
        for head in HEADS {
            model.param_mut(&format!("head.{head}.conv1.weight")).unwrap().data_mut().fill(0.0);
            let bias = model.param_mut(&format!("head.{head}.conv1.bias")).unwrap();
            bias.data_mut().fill(0.0);
            bias.data_mut()[2] = 0.5f32.sqrt();
        }
        let img = noise_image(8, 8, 11);
        let out = interpolate(&img, &img, &model).unwrap();
        assert_eq!(out.size(), img.size());
        assert!(out.max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn deterministic_construction() {
        let cfg = ArchConfig::new(vec![4, 8], 3).unwrap();
        let a = InterpolatorModel::<f32>::new(cfg.clone(), 42).unwrap();
        let b = InterpolatorModel::<f32>::new(cfg.clone(), 42).unwrap();
        let c = InterpolatorModel::<f32>::new(cfg, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn param_specs_cover_params() {
        let cfg = ArchConfig::default();
        let m = InterpolatorModel::<f32>::new(cfg.clone(), 0).unwrap();
        assert_eq!(m.params().iter().map(Tensor::len).sum::<usize>(), cfg.param_count());
        assert_eq!(m.param("head.k2h.conv1.bias").unwrap().shape(), &[13]);
    }
}
