//! Fingerprint image reconstruction from minutiae templates, plus digital
//! obliteration for alteration experiments.

mod area;
mod field;
mod noise;
mod render;

use thiserror::Error;

use crate::model::{GrayImage, MinutiaeTemplate, Seed};

pub use area::{area_contains, fit_area, AreaModel};
pub use field::orientation_from_minutiae;
pub use noise::{add_noise, add_noise_in, box_blur, obliterate, Scar, ScarStyle};
pub use render::{grow_ridges, stamp_prototypes, KnownMask};

/// Cell size of the interpolated orientation field used by [`reconstruct`].
pub const FIELD_CELL: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("template has no minutiae")]
    EmptyTemplate,
    #[error("nothing to grow from: empty known mask and empty area")]
    NoSeed,
    #[error("known mask does not match the seed image dimensions")]
    MaskMismatch,
    #[error("invalid synthesis parameter: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisParams {
    /// Pixels per ridge cycle.
    pub ridge_period: f64,
    /// Side of the square prototype patch; odd.
    pub prototype_size: usize,
    pub growth_iters_max: usize,
    /// White dots per 10⁴ px².
    pub noise_dots: f64,
    /// Range of dot semi-axes in pixels.
    pub dot_radius: (f64, f64),
    /// Box-blur radius; 0 disables.
    pub smoothing: usize,
    /// Initial silhouette half-extent around the minutiae centroid.
    pub margin: f64,
}

impl Default for SynthesisParams {
    fn default() -> Self {
        SynthesisParams {
            ridge_period: 9.0,
            prototype_size: 15,
            growth_iters_max: 10_000,
            noise_dots: 3.0,
            dot_radius: (1.0, 3.0),
            smoothing: 1,
            margin: 20.0,
        }
    }
}

impl SynthesisParams {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        if !(self.ridge_period >= 4.0) {
            return Err(SynthesisError::InvalidParams("ridge_period must be at least 4"));
        }
        if self.prototype_size < 9 || self.prototype_size.is_multiple_of(2) {
            return Err(SynthesisError::InvalidParams("prototype_size must be odd and at least 9"));
        }
        let (lo, hi) = self.dot_radius;
        if !(lo > 0.0 && lo <= hi) {
            return Err(SynthesisError::InvalidParams("dot_radius must be a positive range"));
        }
        if !(self.noise_dots >= 0.0) || !(self.margin >= 0.0) {
            return Err(SynthesisError::InvalidParams("noise_dots and margin must be nonnegative"));
        }
        Ok(())
    }
}

/// Full pipeline: silhouette, orientation, prototypes, growth, noise.
pub fn reconstruct(t: &MinutiaeTemplate, p: &SynthesisParams, seed: Seed) -> Result<GrayImage, SynthesisError> {
    p.validate()?;
    let area = fit_area(t, p)?;
    let field = orientation_from_minutiae(t, FIELD_CELL)?;
    let (img, mask) = stamp_prototypes(t, &field, p);
    let grown = grow_ridges(&img, &mask, &field, &area, p)?;
    Ok(add_noise_in(&grown, &area, p, seed))
}
