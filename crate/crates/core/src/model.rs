//! Shared domain types: minutiae, templates, raster images and match scores.

use std::f64::consts::{PI, TAU};
use std::fmt;

use thiserror::Error;

/// Ridge feature type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MinutiaKind {
    Termination,
    Bifurcation,
}

impl MinutiaKind {
    pub fn code(self) -> u8 {
        match self {
            MinutiaKind::Termination => 0,
            MinutiaKind::Bifurcation => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(MinutiaKind::Termination),
            1 => Some(MinutiaKind::Bifurcation),
            _ => None,
        }
    }
}

/// A located, oriented ridge feature.
///
/// `theta` is a full-circle direction in `[0, 2π)`. For a termination it
/// points from the ending along its ridge; for a bifurcation it points
/// between the two branches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minutia {
    pub x: u32,
    pub y: u32,
    pub theta: f64,
    pub kind: MinutiaKind,
}

impl Minutia {
    /// Builds a minutia, wrapping `theta` into `[0, 2π)`.
    pub fn new(x: u32, y: u32, theta: f64, kind: MinutiaKind) -> Self {
        Minutia {
            x,
            y,
            theta: wrap_angle(theta),
            kind,
        }
    }

    pub fn distance(&self, other: &Minutia) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        dx.hypot(dy)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("minutia {index} at ({x}, {y}) lies outside the {width}x{height} image")]
    OutOfBounds {
        index: usize,
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("minutia {index} has theta {theta} outside [0, 2pi)")]
    BadAngle { index: usize, theta: f64 },
    #[error("template holds {0} minutiae, more than 65535")]
    TooMany(usize),
}

/// Maximum minutiae count representable by the on-disk format.
pub const MAX_MINUTIAE: usize = 65535;

/// A fingerprint's feature set plus the image metadata it was taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct MinutiaeTemplate {
    width: u32,
    height: u32,
    resolution: u32,
    minutiae: Vec<Minutia>,
}

impl MinutiaeTemplate {
    pub fn new(width: u32, height: u32, resolution: u32) -> Self {
        MinutiaeTemplate {
            width,
            height,
            resolution,
            minutiae: Vec::new(),
        }
    }

    /// Builds a template, validating every minutia.
    pub fn with_minutiae(
        width: u32,
        height: u32,
        resolution: u32,
        minutiae: Vec<Minutia>,
    ) -> Result<Self, TemplateError> {
        let mut t = MinutiaeTemplate::new(width, height, resolution);
        if minutiae.len() > MAX_MINUTIAE {
            return Err(TemplateError::TooMany(minutiae.len()));
        }
        for (index, m) in minutiae.iter().enumerate() {
            t.check(index, m)?;
        }
        t.minutiae = minutiae;
        Ok(t)
    }

    fn check(&self, index: usize, m: &Minutia) -> Result<(), TemplateError> {
        if m.x >= self.width || m.y >= self.height {
            return Err(TemplateError::OutOfBounds {
                index,
                x: m.x,
                y: m.y,
                width: self.width,
                height: self.height,
            });
        }
        if !(0.0..TAU).contains(&m.theta) {
            return Err(TemplateError::BadAngle {
                index,
                theta: m.theta,
            });
        }
        Ok(())
    }

    pub fn push(&mut self, m: Minutia) -> Result<(), TemplateError> {
        if self.minutiae.len() >= MAX_MINUTIAE {
            return Err(TemplateError::TooMany(self.minutiae.len() + 1));
        }
        self.check(self.minutiae.len(), &m)?;
        self.minutiae.push(m);
        Ok(())
    }

    /// Replaces the minutia at `index`. Panics if `index` is out of range.
    pub fn replace(&mut self, index: usize, m: Minutia) -> Result<(), TemplateError> {
        self.check(index, &m)?;
        self.minutiae[index] = m;
        Ok(())
    }

    pub fn remove(&mut self, index: usize) -> Minutia {
        self.minutiae.remove(index)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn minutiae(&self) -> &[Minutia] {
        &self.minutiae
    }

    pub fn len(&self) -> usize {
        self.minutiae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minutiae.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("pixel buffer holds {actual} values, expected {width}x{height}")]
    SizeMismatch {
        width: usize,
        height: usize,
        actual: usize,
    },
}

/// 8-bit grayscale raster, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if pixels.len() != width * height {
            return Err(ImageError::SizeMismatch {
                width,
                height,
                actual: pixels.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn mean(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }
}

/// Similarity in `[0, 1]`; 1 means identical.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct MatchScore(f64);

impl MatchScore {
    /// Wraps a similarity, clamping it into `[0, 1]`. NaN maps to 0.
    pub fn new(value: f64) -> Self {
        if value.is_nan() {
            return MatchScore(0.0);
        }
        // adding 0.0 turns -0.0 into +0.0
        MatchScore(value.clamp(0.0, 1.0) + 0.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for MatchScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    pub fn is_accept(self) -> bool {
        matches!(self, Decision::Accept)
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Accept => f.write_str("Accept"),
            Decision::Reject => f.write_str("Reject"),
        }
    }
}

/// Acceptance iff `score >= tau`.
pub fn decide(score: MatchScore, tau: f64) -> Decision {
    if score.value() >= tau {
        Decision::Accept
    } else {
        Decision::Reject
    }
}

/// Seed for a deterministic pseudo-random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Seed(pub u64);

impl Seed {
    /// Derives an independent child seed (splitmix64 over `self ^ stream`).
    pub fn derive(self, stream: u64) -> Seed {
        let mut z = self
            .0
            .wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Seed(z ^ (z >> 31))
    }

    pub fn rng(self) -> Rng {
        use rand::SeedableRng;
        Rng::seed_from_u64(self.0)
    }
}

/// The crate-wide deterministic generator.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Wraps any finite angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Folds an angle into `[0, π)`.
pub fn fold_pi(theta: f64) -> f64 {
    let w = theta.rem_euclid(PI);
    if w >= PI {
        0.0
    } else {
        w
    }
}

/// Distance between two undirected ridge orientations, in `[0, π/2]`.
pub fn ridge_angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d).max(0.0)
}

/// Rounds half-up and clamps into `0..=255`.
pub fn clamp_pixel(v: f64) -> u8 {
    let r = (v + 0.5).floor();
    if r <= 0.0 {
        0
    } else if r >= 255.0 {
        255
    } else {
        r as u8
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    /// Minimum over a window of k of |a - b + kπ|, folded to [0, π/2].
    fn angle_diff_oracle(a: f64, b: f64) -> f64 {
        (-2..=2)
            .map(|k| (a - b + k as f64 * PI).abs())
            .fold(f64::INFINITY, f64::min)
            .min(FRAC_PI_2)
    }

    #[test]
    fn ridge_angle_diff_examples() {
        assert_eq!(ridge_angle_diff(0.3, 0.3), 0.0);
        assert!(ridge_angle_diff(0.0, PI).abs() < 1e-12);
        let d = ridge_angle_diff(0.1, FRAC_PI_2 + 0.1);
        assert!((d - angle_diff_oracle(0.1, FRAC_PI_2 + 0.1)).abs() < 1e-12);
        assert!((d - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn clamp_pixel_examples() {
        assert_eq!(clamp_pixel(300.0), 255);
        assert_eq!(clamp_pixel(-4.2), 0);
        assert_eq!(clamp_pixel(127.5), 128);
        assert_eq!(clamp_pixel(127.49), 127);
    }

    #[test]
    fn clamp_pixel_idempotent_on_bytes() {
        for v in 0..=255u8 {
            assert_eq!(clamp_pixel(v as f64), v);
        }
    }

    #[test]
    fn template_rejects_out_of_bounds() {
        let mut t = MinutiaeTemplate::new(10, 10, 500);
        assert!(t.push(Minutia::new(9, 9, 0.0, MinutiaKind::Termination)).is_ok());
        assert!(matches!(
            t.push(Minutia::new(10, 0, 0.0, MinutiaKind::Termination)),
            Err(TemplateError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn wrap_angle_stays_below_tau() {
        assert!(wrap_angle(-1e-18) < TAU);
        assert_eq!(wrap_angle(TAU), 0.0);
    }

    #[test]
    fn seed_streams_are_reproducible() {
        use rand::Rng as _;
        let a: Vec<u64> = (0..4).map(|_| 0).scan(Seed(9).rng(), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(Seed(9).rng(), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
        assert_ne!(Seed(9).derive(0), Seed(9).derive(1));
    }

    proptest! {
        #[test]
        fn angle_diff_symmetric(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            prop_assert!((ridge_angle_diff(a, b) - ridge_angle_diff(b, a)).abs() < 1e-12);
        }

        #[test]
        fn angle_diff_matches_enumeration(a in 0.0f64..TAU, b in 0.0f64..TAU) {
            prop_assert!((ridge_angle_diff(a, b) - angle_diff_oracle(a, b)).abs() < 1e-9);
        }

        #[test]
        fn angle_diff_pi_periodic(a in -20.0f64..20.0) {
            prop_assert!(ridge_angle_diff(a, a + PI) < 1e-9);
        }
    }
}
