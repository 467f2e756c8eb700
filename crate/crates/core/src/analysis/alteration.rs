use crate::model::GrayImage;

use super::minutiae::{extract_minutiae, ExtractParams};
use super::orientation::orientation_from_image;
use super::AnalysisError;

const FIELD_CELL: usize = 8;
const DENSITY_BLOCK: usize = 32;
const DENSITY_FACTOR: f64 = 3.0;
pub const MIN_ALTERATION_SIDE: usize = 64;

/// Seeds of the clean synthetic prints used to calibrate [`ALTERATION_THRESHOLD`]:
/// templates from `generate::random_template(Seed(s), 25, 256, 288)` for
/// `s` in this range, each reconstructed with default parameters and `Seed(s)`.
pub const ALTERATION_CALIBRATION_SEEDS: std::ops::Range<u64> = 1000..1050;

/// 95th percentile (nearest rank) of [`alteration_score`] over the
/// calibration prints.
pub const ALTERATION_THRESHOLD: f64 = 1.0676456150680385;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlterationClass {
    Altered,
    Unaltered,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlterationReport {
    /// Mean coherence-weighted Laplacian magnitude of the doubled-angle field.
    pub field_roughness: f64,
    /// Fraction of blocks whose minutiae count exceeds 3× the median.
    pub density_outliers: f64,
}

impl AlterationReport {
    pub fn score(&self) -> f64 {
        self.field_roughness + self.density_outliers
    }
}

fn check(img: &GrayImage) -> Result<(), AnalysisError> {
    if img.width() < MIN_ALTERATION_SIDE || img.height() < MIN_ALTERATION_SIDE {
        return Err(AnalysisError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min: MIN_ALTERATION_SIDE,
        });
    }
    Ok(())
}

pub fn alteration_report(img: &GrayImage) -> Result<AlterationReport, AnalysisError> {
    check(img)?;
    let f = orientation_from_image(img, FIELD_CELL)?;
    let vec_at = |c: usize, r: usize| {
        let t = 2.0 * f.angle(c, r);
        (t.cos(), t.sin())
    };
    let mut total = 0.0;
    let mut cells = 0usize;
    for r in 1..f.rows - 1 {
        for c in 1..f.cols - 1 {
            let (x0, y0) = vec_at(c, r);
            let mut lx = 4.0 * x0;
            let mut ly = 4.0 * y0;
            for (cc, rr) in [(c - 1, r), (c + 1, r), (c, r - 1), (c, r + 1)] {
                let (x, y) = vec_at(cc, rr);
                lx -= x;
                ly -= y;
            }
            total += f.coherence[f.index(c, r)] * lx.hypot(ly);
            cells += 1;
        }
    }
    let field_roughness = if cells > 0 { total / cells as f64 } else { 0.0 };

    let params = ExtractParams::default();
    let t = extract_minutiae(img, &params)?;
    let bc = img.width().div_ceil(DENSITY_BLOCK);
    let br = img.height().div_ceil(DENSITY_BLOCK);
    let mut counts = vec![0usize; bc * br];
    for m in t.minutiae() {
        counts[(m.y as usize / DENSITY_BLOCK) * bc + m.x as usize / DENSITY_BLOCK] += 1;
    }
    let mut sorted = counts.clone();
    sorted.sort_unstable();
    let median = sorted[sorted.len() / 2] as f64;
    let outliers = counts.iter().filter(|&&k| k as f64 > DENSITY_FACTOR * median).count();
    Ok(AlterationReport {
        field_roughness,
        density_outliers: outliers as f64 / counts.len() as f64,
    })
}

/// Alteration evidence; larger means less natural ridge flow.
pub fn alteration_score(img: &GrayImage) -> Result<f64, AnalysisError> {
    Ok(alteration_report(img)?.score())
}

/// Nearest-rank 95th percentile, the rule behind [`ALTERATION_THRESHOLD`].
pub fn percentile_95(scores: &[f64]) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (0.95 * v.len() as f64).ceil() as usize;
    Some(v[rank.max(1) - 1])
}

pub fn classify_alteration(img: &GrayImage, threshold: f64) -> Result<(f64, AlterationClass), AnalysisError> {
    let s = alteration_score(img)?;
    let class = if s > threshold {
        AlterationClass::Altered
    } else {
        AlterationClass::Unaltered
    };
    Ok((s, class))
}
