//! Equivariance error of whole super-resolution models.

use crate::error::Result;
use crate::group::{inscribed_disk_mask, quarter_turns, rotate_image, Image};
use crate::inr::InrModel;

use super::metrics::{nmae, nmse};

#[derive(Debug, Clone, PartialEq)]
pub struct EquivEntry {
    pub nmse: f64,
    pub nmae: f64,
    /// Per-pixel maximum over channels of `|y_1 - R y_0|`.
    pub error_map: Image,
}

/// Compares `SR(rotate(img))` with `rotate(SR(img))`.
///
/// `mask = None` restricts the metric to the inscribed disk exactly when the
/// angle is not a right-angle multiple.
pub fn equivariance_error(
    model: &InrModel,
    img: &Image,
    angle: f64,
    scale: f64,
    eps: f64,
    mask: Option<bool>,
) -> Result<EquivEntry> {
    let mode = model.config().inr.mode;
    let y0 = model.super_resolve_with(img, scale, mode, eps)?;
    let y1 = model.super_resolve_with(&rotate_image(img, angle)?, scale, mode, eps)?;
    let reference = rotate_image(&y0, angle)?;
    entry(&y1, &reference, angle, mask)
}

/// Metrics and error map for a rotated output against its reference.
pub fn entry(y1: &Image, reference: &Image, angle: f64, mask: Option<bool>) -> Result<EquivEntry> {
    let use_mask = mask.unwrap_or(quarter_turns(angle).is_none());
    let m = use_mask.then(|| inscribed_disk_mask(y1.h, y1.w));
    let e2 = nmse(y1, reference, m.as_deref())?;
    let e1 = nmae(y1, reference, m.as_deref())?;
    let c = y1.c;
    let error_map = Image::from_fn(y1.h, y1.w, 1, |i, j, _| {
        (0..c)
            .map(|ch| (y1.get(i, j, ch) - reference.get(i, j, ch)).abs())
            .fold(0.0, f64::max)
    });
    Ok(EquivEntry {
        nmse: e2,
        nmae: e1,
        error_map,
    })
}
