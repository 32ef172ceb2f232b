//! Patch sampling with the disparity screen.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightfield::{AngularAxis, Image, LightField, ViewTriplet};

/// Spatial crop sizes actually used for a set of training views.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropPlan {
    pub coarse: usize,
    pub fine: usize,
    /// True when the configured crops did not fit and were reduced.
    pub shrunk: bool,
}

/// Picks crop sizes for views of `view_size`. Configured crops larger than
/// the views fall back to `desk` crops, and to the view itself below that.
/// The fine crop is rounded down to a multiple of `multiple`.
pub fn crop_plan(view_size: (usize, usize), coarse: usize, fine: usize, desk: (usize, usize), multiple: usize) -> Result<CropPlan> {
    if fine > coarse || desk.1 > desk.0 {
        return Err(Error::InvalidArgument(format!("fine crop {fine} exceeds coarse crop {coarse}")));
    }
    let side = view_size.0.min(view_size.1);
    let (mut c, mut f, mut shrunk) = (coarse, fine, false);
    if side < c {
        shrunk = true;
        if side >= desk.0 {
            (c, f) = desk;
        } else {
            c = side;
            f = f.min(desk.1).min(side);
        }
    }
    let rounded = f - f % multiple.max(1);
    if rounded == 0 {
        return Err(Error::InvalidArgument(format!(
            "views of {}x{} are too small for a training crop that is a multiple of {multiple}",
            view_size.1, view_size.0
        )));
    }
    Ok(CropPlan { coarse: c, fine: rounded, shrunk: shrunk || rounded != f })
}

fn gray(img: &Image) -> Vec<f64> {
    let n = img.height() * img.width();
    (0..n).map(|i| (0..3).map(|c| img.plane(c)[i] as f64).sum::<f64>() / 3.0).collect()
}

/// Integer shift `k` along `axis` maximising the normalised cross
/// correlation of `a(p + k)` with `b(p)`. `None` for textureless input.
pub fn estimate_shift(a: &Image, b: &Image, axis: AngularAxis, max_shift: usize) -> Option<i32> {
    let (h, w) = a.size();
    let (ga, gb) = (gray(a), gray(b));
    let along = match axis {
        AngularAxis::Horizontal => w,
        AngularAxis::Vertical => h,
    };
    let max_shift = max_shift.min(along / 2) as i64;
    let mut best: Option<(f64, i32)> = None;
    for k in -max_shift..=max_shift {
        let (mut sa, mut sb, mut saa, mut sbb, mut sab, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let (ya, xa) = match axis {
                    AngularAxis::Horizontal => (y, x + k),
                    AngularAxis::Vertical => (y + k, x),
                };
                if ya < 0 || xa < 0 || ya >= h as i64 || xa >= w as i64 {
                    continue;
                }
                let va = ga[(ya * w as i64 + xa) as usize];
                let vb = gb[(y * w as i64 + x) as usize];
                sa += va;
                sb += vb;
                saa += va * va;
                sbb += vb * vb;
                sab += va * vb;
                n += 1.0;
            }
        }
        let cov = sab / n - (sa / n) * (sb / n);
        let (va, vb) = (saa / n - (sa / n).powi(2), sbb / n - (sb / n).powi(2));
        if va < 1e-8 || vb < 1e-8 {
            continue;
        }
        let ncc = cov / (va * vb).sqrt();
        // Ties go to the smaller shift.
        if best.is_none_or(|(s, bk)| ncc > s + 1e-12 || ((ncc - s).abs() <= 1e-12 && k.unsigned_abs() < bk.unsigned_abs() as u64)) {
            best = Some((ncc, k as i32));
        }
    }
    best.map(|(_, k)| k)
}

/// Accepts a triplet iff the estimated shift between its outer views is at
/// least `threshold` pixels. A zero threshold accepts everything.
pub fn disparity_screen(triplet: &ViewTriplet, threshold: f64, max_shift: usize) -> bool {
    if threshold <= 0.0 {
        return true;
    }
    match estimate_shift(&triplet.left, &triplet.right, triplet.axis, max_shift) {
        Some(k) => f64::from(k.abs()) >= threshold,
        None => false,
    }
}

/// Where a sampled patch came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchWindow {
    /// Angular line and center position along the axis.
    pub line: usize,
    pub pos: usize,
    pub top: usize,
    pub left: usize,
    pub size: usize,
}

#[derive(Clone, Debug)]
pub struct SampledPatch {
    pub triplet: ViewTriplet,
    pub window: PatchWindow,
    pub rejected: usize,
}

/// Screening parameters shared by every draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchScreen {
    pub threshold: f64,
    pub max_shift: usize,
    pub max_attempts: usize,
}

/// Draws a random triplet from `lf`, takes a grid-aligned coarse crop and a
/// random fine crop inside it, and retries until the screen accepts.
pub fn sample_patch_triplet(
    lf: &LightField,
    axis: AngularAxis,
    plan: CropPlan,
    screen: PatchScreen,
    rng: &mut impl Rng,
) -> Result<SampledPatch> {
    let extent = lf.extent(axis);
    if extent < 3 {
        return Err(Error::InvalidArgument(format!("{axis} extent {extent} < 3: no triplets to sample")));
    }
    let (h, w) = lf.view_size();
    if plan.coarse > h.min(w) || plan.fine > plan.coarse {
        return Err(Error::InvalidArgument(format!("crop plan {plan:?} does not fit {w}x{h} views")));
    }
    let spacing = lf.provenance().spacing();
    let (tiles_y, tiles_x) = (h / plan.coarse, w / plan.coarse);
    for attempt in 0..screen.max_attempts.max(1) {
        let line = rng.gen_range(0..lf.extent(axis.other()));
        let pos = rng.gen_range(1..extent - 1);
        let slack = plan.coarse - plan.fine;
        let top = rng.gen_range(0..tiles_y) * plan.coarse + rng.gen_range(0..=slack);
        let left = rng.gen_range(0..tiles_x) * plan.coarse + rng.gen_range(0..=slack);
        let crop = |p: usize| lf.view_along(axis, line, p).crop(top, left, plan.fine, plan.fine);
        let origin = match axis {
            AngularAxis::Horizontal => (line, pos),
            AngularAxis::Vertical => (pos, line),
        };
        let triplet = ViewTriplet::new(crop(pos - 1)?, crop(pos)?, crop(pos + 1)?, axis, origin, spacing)?;
        if disparity_screen(&triplet, screen.threshold, screen.max_shift) {
            let window = PatchWindow { line, pos, top, left, size: plan.fine };
            return Ok(SampledPatch { triplet, window, rejected: attempt });
        }
    }
    Err(Error::NoAcceptablePatch { attempts: screen.max_attempts, threshold: screen.threshold })
}
