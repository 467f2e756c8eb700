//! Feature extraction from fingerprint images: orientation estimation,
//! binarization and thinning, crossing-number minutiae, and an alteration
//! (obliteration) detector.

mod alteration;
mod minutiae;
pub(crate) mod orientation;
mod thinning;

use thiserror::Error;

use crate::model::TemplateError;

pub use alteration::{
    alteration_report, alteration_score, classify_alteration, percentile_95, AlterationClass, AlterationReport,
    ALTERATION_CALIBRATION_SEEDS,
    ALTERATION_THRESHOLD,
};
pub use minutiae::{extract_minutiae, foreground_mask, ExtractParams, MIN_EXTRACT_SIDE};
pub use orientation::{orientation_from_image, OrientationField};
pub use thinning::{binarize, binarize_and_thin, crossing_number, thin, SkeletonImage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("image {width}x{height} is smaller than the required {min}x{min}")]
    ImageTooSmall { width: usize, height: usize, min: usize },
    #[error(transparent)]
    Template(#[from] TemplateError),
}
