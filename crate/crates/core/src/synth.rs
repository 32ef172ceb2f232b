//! Synthetic light fields of fronto-parallel textured planes with known
//! disparity, and the exact translation interpolator for them.
//!
//! View `(t, s)` samples the texture at `(y + (t - t0) d, x + (s - s0) d)`
//! where `(t0, s0)` is the central view and `d` the disparity in pixels per
//! angular step. Moving one step right along `s` therefore shifts content
//! `d` pixels to the left.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Float, Graph, Var};
use crate::error::{Error, Result};
use crate::lightfield::{AngularAxis, Image, LightField, Provenance, CHANNELS};
use crate::net::{Interpolator, Midpoint};

#[derive(Clone, Debug, PartialEq)]
pub enum Texture {
    /// Gaussian-blurred white noise, independently per channel.
    Noise { blur_sigma: f64 },
    Checkerboard { cell: usize },
    /// An imported image; must cover the whole sampling canvas.
    Image(Image),
}

impl Default for Texture {
    fn default() -> Self {
        Texture::Noise { blur_sigma: 1.5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub texture: Texture,
    /// Pixels per angular step.
    pub disparity: f64,
    pub rows: usize,
    pub cols: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn planar(disparity: f64, grid: usize, size: usize, seed: u64) -> Self {
        Self {
            texture: Texture::default(),
            disparity,
            rows: grid,
            cols: grid,
            height: size,
            width: size,
            seed,
        }
    }

    fn reference(&self) -> (usize, usize) {
        ((self.rows - 1) / 2, (self.cols - 1) / 2)
    }

    fn max_offset(&self) -> usize {
        let (t0, s0) = self.reference();
        t0.max(self.rows - 1 - t0).max(s0).max(self.cols - 1 - s0)
    }

    fn validate_disparity(&self, d: f64) -> Result<()> {
        if !d.is_finite() {
            return Err(Error::InvalidArgument("disparity must be finite".into()));
        }
        let reach = d.abs() * self.max_offset() as f64;
        let limit = self.width.min(self.height) as f64 / 4.0;
        if reach >= limit {
            return Err(Error::InvalidArgument(format!(
                "|disparity| {} x max angular offset {} = {reach} px must stay below a quarter of the view ({limit} px)",
                d.abs(),
                self.max_offset()
            )));
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument("empty grid or view size".into()));
        }
        self.validate_disparity(self.disparity)
    }
}

/// What the generator knows about a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub disparity: f64,
    pub foreground_disparity: Option<f64>,
    /// `(t0, s0)` of the view that shows the texture unshifted.
    pub reference: (usize, usize),
    pub seed: u64,
}

/// A texture canvas with an origin offset so that negative view coordinates
/// stay inside.
struct Canvas {
    image: Image,
    pad: usize,
}

impl Canvas {
    fn build(texture: &Texture, height: usize, width: usize, pad: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (ch, cw) = (height + 2 * pad, width + 2 * pad);
        let image = match texture {
            Texture::Noise { blur_sigma } => noise_texture(ch, cw, *blur_sigma, rng)?,
            Texture::Checkerboard { cell } => {
                let cell = (*cell).max(1);
                Image::from_fn(ch, cw, |y, x, c| {
                    let on = (y / cell + x / cell) % 2 == 0;
                    let base = if on { 0.85 } else { 0.15 };
                    base - 0.05 * c as f32
                })?
            }
            Texture::Image(img) => {
                if img.height() < ch || img.width() < cw {
                    return Err(Error::InvalidArgument(format!(
                        "texture image {}x{} smaller than the required canvas {ch}x{cw}",
                        img.height(),
                        img.width()
                    )));
                }
                img.crop((img.height() - ch) / 2, (img.width() - cw) / 2, ch, cw)?
            }
        };
        Ok(Self { image, pad })
    }

    /// Bilinear sample at view coordinates `(y, x)`; exact at integers.
    fn sample(&self, y: f64, x: f64, c: usize) -> f32 {
        let (cy, cx) = (y + self.pad as f64, x + self.pad as f64);
        let (y0, x0) = (cy.floor(), cx.floor());
        let (fy, fx) = ((cy - y0) as f32, (cx - x0) as f32);
        let max_y = self.image.height() as isize - 1;
        let max_x = self.image.width() as isize - 1;
        let at = |yy: isize, xx: isize| self.image.get(yy.clamp(0, max_y) as usize, xx.clamp(0, max_x) as usize, c);
        let (iy, ix) = (y0 as isize, x0 as isize);
        if fy == 0.0 && fx == 0.0 {
            return at(iy, ix);
        }
        let top = at(iy, ix) * (1.0 - fx) + at(iy, ix + 1) * fx;
        let bottom = at(iy + 1, ix) * (1.0 - fx) + at(iy + 1, ix + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f32> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp() as f32).collect();
    let s: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn blur_plane(plane: &[f32], h: usize, w: usize, kernel: &[f32]) -> Vec<f32> {
    let r = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] =
                kernel.iter().enumerate().map(|(i, k)| k * plane[y * w + clamp(x as isize + i as isize - r, w)]).sum();
        }
    }
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] =
                kernel.iter().enumerate().map(|(i, k)| k * tmp[clamp(y as isize + i as isize - r, h) * w + x]).sum();
        }
    }
    out
}

/// Band-limited noise stretched to `[0.05, 0.95]` per channel.
pub fn noise_texture(height: usize, width: usize, blur_sigma: f64, rng: &mut impl Rng) -> Result<Image> {
    let mut data = Vec::with_capacity(CHANNELS * height * width);
    let kernel = (blur_sigma > 0.0).then(|| gaussian_kernel(blur_sigma));
    for _ in 0..CHANNELS {
        let white: Vec<f32> = (0..height * width).map(|_| rng.gen::<f32>()).collect();
        let plane = match &kernel {
            Some(k) => blur_plane(&white, height, width, k),
            None => white,
        };
        let lo = plane.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = plane.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let range = (hi - lo).max(1e-6);
        data.extend(plane.iter().map(|v| 0.05 + 0.9 * (v - lo) / range));
    }
    Image::new(height, width, data)
}

fn canvas_pad(spec: &SceneSpec, disparities: &[f64]) -> usize {
    let reach = disparities.iter().map(|d| d.abs()).fold(0.0, f64::max) * spec.max_offset() as f64;
    reach.ceil() as usize + 2
}

/// Renders a single textured plane at `spec.disparity`.
pub fn gen_planar_lf(spec: &SceneSpec) -> Result<(LightField, SceneTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let canvas = Canvas::build(&spec.texture, spec.height, spec.width, canvas_pad(spec, &[spec.disparity]), &mut rng)?;
    let (t0, s0) = spec.reference();
    let d = spec.disparity;
    let mut views = Vec::with_capacity(spec.rows * spec.cols);
    for t in 0..spec.rows {
        for s in 0..spec.cols {
            let (oy, ox) = ((t as f64 - t0 as f64) * d, (s as f64 - s0 as f64) * d);
            views.push(Image::from_fn(spec.height, spec.width, |y, x, c| {
                canvas.sample(y as f64 + oy, x as f64 + ox, c)
            })?);
        }
    }
    let lf = LightField::new(spec.rows, spec.cols, views, Provenance::Dense)?;
    let truth = SceneTruth { disparity: d, foreground_disparity: None, reference: (t0, s0), seed: spec.seed };
    Ok((lf, truth))
}

/// Foreground layer of a two-plane scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Foreground {
    pub disparity: f64,
    /// `height × width` coverage in the reference view, row-major.
    pub mask: Vec<bool>,
    pub texture: Texture,
}

impl Foreground {
    /// A centered square covering half of each dimension.
    pub fn centered_square(spec: &SceneSpec, disparity: f64) -> Self {
        let (h, w) = (spec.height, spec.width);
        let mask = (0..h * w)
            .map(|i| {
                let (y, x) = (i / w, i % w);
                (h / 4..h - h / 4).contains(&y) && (w / 4..w - w / 4).contains(&x)
            })
            .collect();
        Self { disparity, mask, texture: Texture::Checkerboard { cell: 6 } }
    }
}

/// Composites a masked foreground plane over the background plane of
/// `spec`, each translating at its own disparity.
pub fn gen_two_layer_lf(spec: &SceneSpec, fg: &Foreground) -> Result<(LightField, SceneTruth)> {
    spec.validate()?;
    spec.validate_disparity(fg.disparity)?;
    let (h, w) = (spec.height, spec.width);
    if fg.mask.len() != h * w {
        return Err(Error::InvalidArgument(format!("foreground mask has {} entries for a {h}x{w} view", fg.mask.len())));
    }
    if fg.disparity == spec.disparity {
        return Err(Error::InvalidArgument("foreground and background disparities must differ".into()));
    }
    // the background canvas matches gen_planar_lf for the same spec
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bg = Canvas::build(&spec.texture, h, w, canvas_pad(spec, &[spec.disparity]), &mut rng)?;
    let mut fg_rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let fg_canvas = Canvas::build(&fg.texture, h, w, canvas_pad(spec, &[fg.disparity]), &mut fg_rng)?;
    let covered = |y: f64, x: f64| {
        let (yy, xx) = (y.round(), x.round());
        yy >= 0.0 && xx >= 0.0 && (yy as usize) < h && (xx as usize) < w && fg.mask[yy as usize * w + xx as usize]
    };
    let (t0, s0) = spec.reference();
    let mut views = Vec::with_capacity(spec.rows * spec.cols);
    for t in 0..spec.rows {
        for s in 0..spec.cols {
            let (dt, ds) = (t as f64 - t0 as f64, s as f64 - s0 as f64);
            views.push(Image::from_fn(h, w, |y, x, c| {
                let (fy, fx) = (y as f64 + dt * fg.disparity, x as f64 + ds * fg.disparity);
                if covered(fy, fx) {
                    fg_canvas.sample(fy, fx, c)
                } else {
                    bg.sample(y as f64 + dt * spec.disparity, x as f64 + ds * spec.disparity, c)
                }
            })?);
        }
    }
    let lf = LightField::new(spec.rows, spec.cols, views, Provenance::Dense)?;
    let truth = SceneTruth {
        disparity: spec.disparity,
        foreground_disparity: Some(fg.disparity),
        reference: (t0, s0),
        seed: spec.seed,
    };
    Ok((lf, truth))
}

fn half_gap(gap: i32) -> Result<isize> {
    if gap % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "translation oracle needs an even displacement between frames, got {gap}"
        )));
    }
    Ok((gap / 2) as isize)
}

/// Exact midpoint of two frames of a planar scene whose content is displaced
/// by `gap` pixels from `frame_a` to `frame_b` along `axis` (the convention
/// of [`gen_planar_lf`]): `0.5 shift(a, -gap/2) + 0.5 shift(b, +gap/2)` with
/// replicated borders.
pub fn translation_oracle(frame_a: &Image, frame_b: &Image, gap: i32, axis: AngularAxis) -> Result<Image> {
    if frame_a.size() != frame_b.size() {
        return Err(Error::Shape(format!("frames {:?} vs {:?}", frame_a.size(), frame_b.size())));
    }
    let half = half_gap(gap)?;
    let (a, b) = match axis {
        AngularAxis::Horizontal => (frame_a.shifted(0, -half), frame_b.shifted(0, half)),
        AngularAxis::Vertical => (frame_a.shifted(-half, 0), frame_b.shifted(half, 0)),
    };
    let data = a.data().iter().zip(b.data()).map(|(p, q)| 0.5 * p + 0.5 * q).collect();
    Image::new(frame_a.height(), frame_a.width(), data)
}

/// Translation oracle for a planar scene of integer `disparity` along
/// `axis`. Frames `span` dense steps apart are displaced by
/// `span * disparity` pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TranslationOracle {
    pub disparity: i32,
    pub axis: AngularAxis,
}

impl TranslationOracle {
    pub fn new(disparity: i32, axis: AngularAxis) -> Self {
        Self { disparity, axis }
    }

    fn gap(&self, span: usize) -> i32 {
        self.disparity * span as i32
    }
}

/// Shifts `[N, C, H, W]` content by `(dy, dx)` inside a graph, replicating
/// borders: `out(y, x) = in(y - dy, x - dx)`.
pub fn graph_shift<T: Float>(g: &mut Graph<T>, v: Var, dy: isize, dx: isize) -> Result<Var> {
    if dy == 0 && dx == 0 {
        return Ok(v);
    }
    let (_, _, h, w) = g.value(v).dims4()?;
    let (py, px) = (dy.unsigned_abs(), dx.unsigned_abs());
    let padded = g.replicate_pad(v, (py, py, px, px))?;
    g.crop(padded, (py as isize - dy) as usize, (px as isize - dx) as usize, h, w)
}

impl<T: Float> Midpoint<T> for TranslationOracle {
    fn midpoint(&self, g: &mut Graph<T>, a: Var, b: Var, span: usize) -> Result<Var> {
        let half = half_gap(self.gap(span))?;
        let (sa, sb) = match self.axis {
            AngularAxis::Horizontal => (graph_shift(g, a, 0, -half)?, graph_shift(g, b, 0, half)?),
            AngularAxis::Vertical => (graph_shift(g, a, -half, 0)?, graph_shift(g, b, half, 0)?),
        };
        let sum = g.add(sa, sb)?;
        Ok(g.scale(sum, T::lit(0.5)))
    }
}

impl Interpolator for TranslationOracle {
    fn interpolate(&self, a: &Image, b: &Image, span: usize) -> Result<Image> {
        translation_oracle(a, b, self.gap(span), self.axis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::extract_epi;

    /// Integer displacement maximizing normalized cross-correlation between
    /// two rows of views, searched over `[-8, 8]`.
    fn best_shift_x(a: &Image, b: &Image) -> isize {
        let (h, w) = a.size();
        let mut best = (f64::NEG_INFINITY, 0);
        for shift in -8isize..=8 {
            let (mut sab, mut saa, mut sbb, mut sa, mut sb, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for y in 0..h {
                for x in 8..w - 8 {
                    let p = a.get(y, (x as isize + shift) as usize, 0) as f64;
                    let q = b.get(y, x, 0) as f64;
                    sab += p * q;
                    saa += p * p;
                    sbb += q * q;
                    sa += p;
                    sb += q;
                    n += 1.0;
                }
            }
            let cov = sab / n - sa * sb / n / n;
            let ncc = cov / ((saa / n - (sa / n).powi(2)) * (sbb / n - (sb / n).powi(2))).sqrt();
            if ncc > best.0 {
                best = (ncc, shift);
            }
        }
        best.1
    }

    #[test]
    fn zero_disparity_views_are_identical() {
        let (lf, truth) = gen_planar_lf(&SceneSpec::planar(0.0, 3, 32, 1)).unwrap();
        assert_eq!(truth.reference, (1, 1));
        assert!(lf.views().iter().all(|v| v == lf.view(0, 0)));
    }

    #[test]
    fn adjacent_views_shift_by_disparity() {
        let (lf, _) = gen_planar_lf(&SceneSpec::planar(2.0, 5, 48, 3)).unwrap();
        // content moves left by d: view(s+1)(x) = view(s)(x + d)
        assert_eq!(best_shift_x(lf.view(2, 1), lf.view(2, 2)), 2);
        assert_eq!(lf.view(2, 2).get(10, 10, 1), lf.view(2, 1).get(10, 12, 1));
    }

    #[test]
    fn epi_marker_advances_by_disparity() {
        let spec = SceneSpec { texture: Texture::Checkerboard { cell: 1000 }, ..SceneSpec::planar(2.0, 5, 64, 0) };
        let mut spec = spec;
        // single bright marker column in an otherwise flat texture
        let mut base = vec![0.2f32; 3 * 100 * 100];
        for c in 0..3 {
            for y in 0..100 {
                base[(c * 100 + y) * 100 + 50] = 1.0;
            }
        }
        spec.texture = Texture::Image(Image::new(100, 100, base).unwrap());
        let (lf, _) = gen_planar_lf(&spec).unwrap();
        let epi = extract_epi(&lf, AngularAxis::Horizontal, 20, 2).unwrap();
        let marker: Vec<usize> = (0..5)
            .map(|row| (0..64).max_by(|&a, &b| epi.get(row, a, 0).total_cmp(&epi.get(row, b, 0))).unwrap())
            .collect();
        for pair in marker.windows(2) {
            assert_eq!(pair[0] as isize - pair[1] as isize, 2, "{marker:?}");
        }
    }

    #[test]
    fn disparity_bound_enforced() {
        assert!(gen_planar_lf(&SceneSpec::planar(2.0, 9, 32, 0)).is_err());
        assert!(gen_planar_lf(&SceneSpec::planar(1.0, 9, 32, 0)).is_ok());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SceneSpec::planar(1.5, 3, 24, 9);
        assert_eq!(gen_planar_lf(&spec).unwrap().0, gen_planar_lf(&spec).unwrap().0);
    }

    #[test]
    fn oracle_recovers_midpoints() {
        let (lf, _) = gen_planar_lf(&SceneSpec::planar(2.0, 5, 48, 5)).unwrap();
        let mid = translation_oracle(lf.view(2, 0), lf.view(2, 2), 4, AngularAxis::Horizontal).unwrap();
        let truth = lf.view(2, 1);
        let m = 2;
        assert_eq!(mid.crop(m, m, 44, 44).unwrap(), truth.crop(m, m, 44, 44).unwrap());
        let vmid = translation_oracle(lf.view(1, 3), lf.view(3, 3), 4, AngularAxis::Vertical).unwrap();
        assert_eq!(vmid.crop(m, m, 44, 44).unwrap(), lf.view(2, 3).crop(m, m, 44, 44).unwrap());
        assert!(translation_oracle(lf.view(0, 0), lf.view(0, 1), 3, AngularAxis::Horizontal).is_err());
        let a = lf.view(0, 0);
        assert_eq!(&translation_oracle(a, a, 0, AngularAxis::Vertical).unwrap(), a);
    }

    #[test]
    fn graph_oracle_matches_image_oracle() {
        let (lf, _) = gen_planar_lf(&SceneSpec::planar(1.0, 5, 32, 2)).unwrap();
        let oracle = TranslationOracle::new(1, AngularAxis::Horizontal);
        let mut g = Graph::<f32>::new();
        let (a, b) = (g.leaf(lf.view(0, 0).to_tensor()), g.leaf(lf.view(0, 2).to_tensor()));
        let out = oracle.midpoint(&mut g, a, b, 2).unwrap();
        let img = Image::from_tensor(g.value(out), 0).unwrap();
        assert_eq!(img, oracle.interpolate(lf.view(0, 0), lf.view(0, 2), 2).unwrap());
    }

    fn two_layer_spec() -> SceneSpec {
        SceneSpec::planar(1.0, 3, 40, 4)
    }

    #[test]
    fn two_layer_degenerate_masks() {
        let spec = two_layer_spec();
        let (bg, _) = gen_planar_lf(&spec).unwrap();
        let empty = Foreground { disparity: 3.0, mask: vec![false; 40 * 40], texture: Texture::default() };
        assert_eq!(gen_two_layer_lf(&spec, &empty).unwrap().0, bg);

        let fg_tex = Texture::Checkerboard { cell: 5 };
        let full = Foreground { disparity: 3.0, mask: vec![true; 40 * 40], texture: fg_tex.clone() };
        let (two, _) = gen_two_layer_lf(&spec, &full).unwrap();
        let fg_only = SceneSpec { texture: fg_tex, disparity: 3.0, ..spec };
        let (fg_lf, _) = gen_planar_lf(&fg_only).unwrap();
        // interior: the full mask only covers reference-view coordinates
        for t in 0..3 {
            for s in 0..3 {
                let a = two.view(t, s).crop(4, 4, 32, 32).unwrap();
                let b = fg_lf.view(t, s).crop(4, 4, 32, 32).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn occluded_strip_width() {
        // flat background and a distinct flat foreground band
        let spec = SceneSpec {
            texture: Texture::Image(Image::constant(60, 60, [0.1; 3]).unwrap()),
            ..two_layer_spec()
        };
        let fg = Foreground {
            disparity: 3.0,
            mask: (0..40 * 40).map(|i| (10..30).contains(&(i % 40))).collect(),
            texture: Texture::Image(Image::constant(60, 60, [0.9; 3]).unwrap()),
        };
        let (lf, _) = gen_two_layer_lf(&spec, &fg).unwrap();
        let left_edge = |img: &Image| (0..40).find(|&x| img.get(20, x, 0) > 0.5).unwrap() as f64;
        // the foreground edge moves by d_fg per step while the background
        // moves by d_bg, so the strip uncovered per step is |d_fg - d_bg|
        let edge_motion = left_edge(lf.view(1, 0)) - left_edge(lf.view(1, 1));
        assert_eq!(edge_motion, fg.disparity);
        assert_eq!((edge_motion - spec.disparity).abs(), 2.0);
    }
}
