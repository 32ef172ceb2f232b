//! Light field data model: views, angular grids, sub-sampling, view
//! triplets and epipolar-plane images.
//!
//! Angular indices are zero based. `s` is the horizontal angular coordinate
//! (grid column) and `t` the vertical one (grid row). A light field sub-sampled
//! by `alpha` keeps the views at dense coordinates `(alpha * t, alpha * s)`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Float, Tensor};
use crate::error::{Error, Result};

/// An RGB image with values in `[0, 1]`, stored channel-planar
/// (`[3, H, W]`, each plane row-major).
#[derive(Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Image({}x{})", self.height, self.width)
    }
}

pub const CHANNELS: usize = 3;

impl Image {
    /// Builds an image from planar data, clamping into `[0, 1]`.
    pub fn new(height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!("image size {height}x{width}")));
        }
        if data.len() != CHANNELS * height * width {
            return Err(Error::Shape(format!(
                "image {height}x{width} needs {} values, got {}",
                CHANNELS * height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("image {height}x{width}")));
        }
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(CHANNELS * height * width);
        for c in 0..CHANNELS {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, data)
    }

    pub fn constant(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self> {
        Self::from_fn(height, width, |_, _, c| rgb[c])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        &self.data[c * self.height * self.width..(c + 1) * self.height * self.width]
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::OutOfBounds(format!(
                "crop {height}x{width} at ({top}, {left}) of {}x{} image",
                self.height, self.width
            )));
        }
        Self::from_fn(height, width, |y, x, c| self.get(top + y, left + x, c))
    }

    /// Translates content by `(dy, dx)`: `out(y, x) = self(y - dy, x - dx)`,
    /// replicating the border for samples that fall outside.
    pub fn shifted(&self, dy: isize, dx: isize) -> Self {
        let (h, w) = (self.height as isize, self.width as isize);
        Self::from_fn(self.height, self.width, |y, x, c| {
            let sy = (y as isize - dy).clamp(0, h - 1) as usize;
            let sx = (x as isize - dx).clamp(0, w - 1) as usize;
            self.get(sy, sx, c)
        })
        .expect("shift preserves validity")
    }

    /// `[1, 3, H, W]` tensor.
    pub fn to_tensor<T: Float>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&v| T::from_f32(v).unwrap()).collect();
        Tensor::new(&[1, CHANNELS, self.height, self.width], data).expect("image tensor")
    }

    /// Stacks images into one `[N, 3, H, W]` tensor.
    pub fn stack<T: Float>(images: &[&Image]) -> Result<Tensor<T>> {
        let first = images.first().ok_or_else(|| Error::InvalidArgument("stack of zero images".into()))?;
        let (h, w) = first.size();
        let mut data = Vec::with_capacity(images.len() * CHANNELS * h * w);
        for img in images {
            if img.size() != (h, w) {
                return Err(Error::Shape(format!("stack: {}x{} vs {h}x{w}", img.height, img.width)));
            }
            data.extend(img.data.iter().map(|&v| T::from_f32(v).unwrap()));
        }
        Tensor::new(&[images.len(), CHANNELS, h, w], data)
    }

    /// Extracts batch element `index` of an `[N, 3, H, W]` tensor, clamping
    /// into `[0, 1]`. Non-finite values are an error.
    pub fn from_tensor<T: Float>(t: &Tensor<T>, index: usize) -> Result<Self> {
        let (n, c, h, w) = t.dims4()?;
        if c != CHANNELS || index >= n {
            return Err(Error::Shape(format!("image from tensor {:?} at index {index}", t.shape())));
        }
        let len = c * h * w;
        let data = t.data()[index * len..(index + 1) * len].iter().map(|v| v.to_f32().unwrap_or(f32::NAN)).collect();
        Self::new(h, w, data)
    }

    pub fn max_abs_diff(&self, other: &Image) -> f32 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngularAxis {
    /// Varying `s`, the grid column.
    Horizontal,
    /// Varying `t`, the grid row.
    Vertical,
}

impl AngularAxis {
    pub fn other(self) -> Self {
        match self {
            Self::Horizontal => Self::Vertical,
            Self::Vertical => Self::Horizontal,
        }
    }
}

impl std::fmt::Display for AngularAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Horizontal => "horizontal",
            Self::Vertical => "vertical",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Dense,
    Sparse { alpha: usize },
}

impl Provenance {
    /// Dense-grid distance between adjacent views.
    pub fn spacing(self) -> usize {
        match self {
            Self::Dense => 1,
            Self::Sparse { alpha } => alpha,
        }
    }
}

/// A `rows × cols` grid of equally sized views, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LightField {
    rows: usize,
    cols: usize,
    views: Vec<Image>,
    provenance: Provenance,
}

impl LightField {
    pub fn new(rows: usize, cols: usize, views: Vec<Image>, provenance: Provenance) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::LightField(format!("angular extents {rows}x{cols}")));
        }
        if views.len() != rows * cols {
            return Err(Error::LightField(format!("{rows}x{cols} grid needs {} views, got {}", rows * cols, views.len())));
        }
        let size = views[0].size();
        if let Some((i, v)) = views.iter().enumerate().find(|(_, v)| v.size() != size) {
            return Err(Error::LightField(format!(
                "view {i} is {}x{}, expected {}x{}",
                v.height(),
                v.width(),
                size.0,
                size.1
            )));
        }
        Ok(Self { rows, cols, views, provenance })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `(height, width)` shared by every view.
    pub fn view_size(&self) -> (usize, usize) {
        self.views[0].size()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn view(&self, t: usize, s: usize) -> &Image {
        assert!(t < self.rows && s < self.cols, "view ({t}, {s}) outside {}x{}", self.rows, self.cols);
        &self.views[t * self.cols + s]
    }

    pub fn views(&self) -> &[Image] {
        &self.views
    }

    pub fn into_views(self) -> Vec<Image> {
        self.views
    }

    pub fn extent(&self, axis: AngularAxis) -> usize {
        match axis {
            AngularAxis::Horizontal => self.cols,
            AngularAxis::Vertical => self.rows,
        }
    }

    /// View at position `pos` along `axis` on angular line `line` of the
    /// other axis.
    pub fn view_along(&self, axis: AngularAxis, line: usize, pos: usize) -> &Image {
        match axis {
            AngularAxis::Horizontal => self.view(line, pos),
            AngularAxis::Vertical => self.view(pos, line),
        }
    }
}

/// Dense angular extent `alpha * (n - 1) + 1` for `n` sparse views.
pub fn dense_angular_size(n: usize, alpha: usize) -> Result<usize> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("sparse extent {n} has no pair to interpolate between")));
    }
    if alpha < 1 {
        return Err(Error::InvalidArgument("upsampling factor must be at least 1".into()));
    }
    Ok(alpha * (n - 1) + 1)
}

/// The `rows x cols` block of views starting at angular index `(top, left)`.
/// Captured grids larger than 9x9 are cut down with `(0, 0)`.
pub fn crop_grid(lf: &LightField, top: usize, left: usize, rows: usize, cols: usize) -> Result<LightField> {
    if rows == 0 || cols == 0 || top + rows > lf.rows || left + cols > lf.cols {
        return Err(Error::OutOfBounds(format!(
            "grid crop {rows}x{cols} at ({top}, {left}) exceeds the {}x{} grid",
            lf.rows, lf.cols
        )));
    }
    let views = (top..top + rows).flat_map(|t| (left..left + cols).map(move |s| lf.view(t, s).clone())).collect();
    LightField::new(rows, cols, views, lf.provenance)
}

/// Keeps the views whose angular coordinates are multiples of `alpha`.
pub fn subsample(lf: &LightField, alpha: usize) -> Result<LightField> {
    if alpha == 0 || !(lf.rows - 1).is_multiple_of(alpha) || !(lf.cols - 1).is_multiple_of(alpha) {
        return Err(Error::LightField(format!(
            "cannot sub-sample a {}x{} grid by alpha={alpha}: extents minus one must be divisible",
            lf.rows, lf.cols
        )));
    }
    if alpha == 1 {
        return Ok(lf.clone());
    }
    let (rows, cols) = ((lf.rows - 1) / alpha + 1, (lf.cols - 1) / alpha + 1);
    let views = (0..rows)
        .flat_map(|t| (0..cols).map(move |s| (t, s)))
        .map(|(t, s)| lf.view(alpha * t, alpha * s).clone())
        .collect();
    let provenance = Provenance::Sparse { alpha: alpha * lf.provenance.spacing() };
    LightField::new(rows, cols, views, provenance)
}

/// Three consecutive views along one angular axis.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewTriplet {
    pub left: Image,
    pub center: Image,
    pub right: Image,
    pub axis: AngularAxis,
    /// `(t, s)` of the center view in the grid it was taken from.
    pub origin: (usize, usize),
    /// Dense-grid distance between adjacent views of the triplet.
    pub spacing: usize,
}

impl ViewTriplet {
    pub fn new(
        left: Image,
        center: Image,
        right: Image,
        axis: AngularAxis,
        origin: (usize, usize),
        spacing: usize,
    ) -> Result<Self> {
        if left.size() != center.size() || right.size() != center.size() {
            return Err(Error::Shape(format!(
                "triplet views {:?} / {:?} / {:?}",
                left.size(),
                center.size(),
                right.size()
            )));
        }
        Ok(Self { left, center, right, axis, origin, spacing })
    }

    pub fn size(&self) -> (usize, usize) {
        self.center.size()
    }

    /// Same spatial window of all three views.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        Ok(Self {
            left: self.left.crop(top, left, height, width)?,
            center: self.center.crop(top, left, height, width)?,
            right: self.right.crop(top, left, height, width)?,
            ..self.clone()
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct TripletExtraction {
    pub triplets: Vec<ViewTriplet>,
    /// Set when the grid is too short along the axis to form any triplet:
    /// fine-tuning is impossible but reconstruction still works.
    pub warning: Option<String>,
}

/// All overlapping (stride 1) triplets along `axis`.
pub fn extract_triplets(lf: &LightField, axis: AngularAxis) -> TripletExtraction {
    let extent = lf.extent(axis);
    if extent < 3 {
        return TripletExtraction {
            triplets: Vec::new(),
            warning: Some(format!("{axis} extent {extent} < 3: no triplets available")),
        };
    }
    let spacing = lf.provenance.spacing();
    let mut triplets = Vec::with_capacity(lf.extent(axis.other()) * (extent - 2));
    for line in 0..lf.extent(axis.other()) {
        for pos in 1..extent - 1 {
            let origin = match axis {
                AngularAxis::Horizontal => (line, pos),
                AngularAxis::Vertical => (pos, line),
            };
            triplets.push(ViewTriplet {
                left: lf.view_along(axis, line, pos - 1).clone(),
                center: lf.view_along(axis, line, pos).clone(),
                right: lf.view_along(axis, line, pos + 1).clone(),
                axis,
                origin,
                spacing,
            });
        }
    }
    TripletExtraction { triplets, warning: None }
}

/// Epipolar-plane image: the spatial line `spatial_line` (an image row for
/// the horizontal axis, a column for the vertical axis) of every view along
/// `axis` at angular index `fixed` of the other axis, stacked top to bottom.
/// The result is `extent(axis) × spatial_extent`.
pub fn extract_epi(lf: &LightField, axis: AngularAxis, spatial_line: usize, fixed: usize) -> Result<Image> {
    let (h, w) = lf.view_size();
    let (line_limit, spatial_extent) = match axis {
        AngularAxis::Horizontal => (h, w),
        AngularAxis::Vertical => (w, h),
    };
    if spatial_line >= line_limit {
        return Err(Error::OutOfBounds(format!("EPI spatial line {spatial_line} of {line_limit}")));
    }
    if fixed >= lf.extent(axis.other()) {
        return Err(Error::OutOfBounds(format!(
            "EPI fixed angular index {fixed} of {}",
            lf.extent(axis.other())
        )));
    }
    Image::from_fn(lf.extent(axis), spatial_extent, |a, p, c| {
        let view = lf.view_along(axis, fixed, a);
        match axis {
            AngularAxis::Horizontal => view.get(spatial_line, p, c),
            AngularAxis::Vertical => view.get(p, spatial_line, c),
        }
    })
}
