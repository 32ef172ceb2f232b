//! Angular upsampling of sparse light fields with a pair interpolator.
//!
//! One axis pass inserts a synthesized view between every adjacent pair
//! along that axis and keeps the input views untouched. Two passes in
//! either order double both angular extents; repeating the cascade with
//! the same models reaches any power-of-two factor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightfield::{AngularAxis, Image, LightField, Provenance};
use crate::net::Interpolator;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CascadeOrder {
    /// Horizontal pass first, then vertical.
    #[default]
    HV,
    VH,
}

impl CascadeOrder {
    pub fn axes(self) -> [AngularAxis; 2] {
        match self {
            Self::HV => [AngularAxis::Horizontal, AngularAxis::Vertical],
            Self::VH => [AngularAxis::Vertical, AngularAxis::Horizontal],
        }
    }
}

impl std::str::FromStr for CascadeOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hv" => Ok(Self::HV),
            "vh" => Ok(Self::VH),
            other => Err(Error::InvalidArgument(format!("unknown cascade order '{other}' (expected hv or vh)"))),
        }
    }
}

/// Models and order for a full reconstruction.
#[derive(Clone, Copy)]
pub struct ReconstructionPlan<'a> {
    pub alpha: usize,
    pub order: CascadeOrder,
    pub horizontal: &'a dyn Interpolator,
    pub vertical: &'a dyn Interpolator,
}

impl ReconstructionPlan<'_> {
    fn model(&self, axis: AngularAxis) -> &dyn Interpolator {
        match axis {
            AngularAxis::Horizontal => self.horizontal,
            AngularAxis::Vertical => self.vertical,
        }
    }
}

/// Inserts one view between every adjacent pair along `axis`, so that the
/// extent `n` becomes `2n - 1`. The pair distance passed to the model is
/// the spacing recorded in the field's provenance; the provenance itself
/// is left for the caller to update once both axes are done.
pub fn upsample_axis(lf: &LightField, axis: AngularAxis, model: &dyn Interpolator) -> Result<LightField> {
    let n = lf.extent(axis);
    if n < 2 {
        return Err(Error::LightField(format!("{axis} extent {n}: nothing to interpolate between")));
    }
    let span = lf.provenance().spacing();
    let lines = lf.extent(axis.other());
    let out_n = 2 * n - 1;
    // (line, position) -> view, filled per angular line
    let mut grid: Vec<Vec<Image>> = Vec::with_capacity(lines);
    for line in 0..lines {
        let mut row = Vec::with_capacity(out_n);
        for pos in 0..n {
            let a = lf.view_along(axis, line, pos);
            row.push(a.clone());
            if pos + 1 < n {
                let b = lf.view_along(axis, line, pos + 1);
                row.push(model.interpolate(a, b, span)?);
            }
        }
        grid.push(row);
    }
    let (rows, cols) = match axis {
        AngularAxis::Horizontal => (lines, out_n),
        AngularAxis::Vertical => (out_n, lines),
    };
    let mut views = Vec::with_capacity(rows * cols);
    for t in 0..rows {
        for s in 0..cols {
            let v = match axis {
                AngularAxis::Horizontal => &grid[t][s],
                AngularAxis::Vertical => &grid[s][t],
            };
            views.push(v.clone());
        }
    }
    LightField::new(rows, cols, views, lf.provenance())
}

fn halved(p: Provenance) -> Provenance {
    match p {
        Provenance::Sparse { alpha } if alpha > 2 => Provenance::Sparse { alpha: alpha / 2 },
        _ => Provenance::Dense,
    }
}

fn cascade(lf: &LightField, plan: &ReconstructionPlan<'_>) -> Result<LightField> {
    let [first, second] = plan.order.axes();
    let mid = upsample_axis(lf, first, plan.model(first))?;
    let out = upsample_axis(&mid, second, plan.model(second))?;
    let (rows, cols) = (out.rows(), out.cols());
    LightField::new(rows, cols, out.into_views(), halved(lf.provenance()))
}

/// Reconstructs the dense grid of `lf` for `plan.alpha`, which must be a
/// power of two. Factors above two run the cascade repeatedly; every
/// intermediate view is clamped to `[0, 1]` before it is reused.
pub fn multistep_reconstruct(lf: &LightField, plan: &ReconstructionPlan<'_>) -> Result<LightField> {
    let alpha = plan.alpha;
    if alpha < 2 || !alpha.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("upsampling factor {alpha} is not a power of two >= 2")));
    }
    if lf.provenance().spacing() != alpha {
        return Err(Error::InvalidArgument(format!(
            "field spacing {} does not match the requested factor {alpha}",
            lf.provenance().spacing()
        )));
    }
    let mut cur = cascade(lf, plan)?;
    while cur.provenance().spacing() > 1 {
        cur = cascade(&cur, plan)?;
    }
    Ok(cur)
}

/// Single- or multi-step reconstruction, chosen by `plan.alpha`.
pub fn reconstruct(lf: &LightField, plan: &ReconstructionPlan<'_>) -> Result<LightField> {
    multistep_reconstruct(lf, plan)
}
