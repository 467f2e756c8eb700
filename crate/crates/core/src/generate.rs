//! Seeded synthetic minutiae templates.

use std::f64::consts::PI;

use rand::Rng as _;

use crate::model::{wrap_angle, Minutia, MinutiaKind, MinutiaeTemplate, Seed};

/// Minimum spacing between generated minutiae, in pixels.
pub const MIN_SPACING: f64 = 20.0;
const RESOLUTION: u32 = 500;

/// Smooth arch-like ridge flow for a `width × height` print, in `[0, π)`.
pub fn global_flow(x: f64, y: f64, width: f64, height: f64) -> f64 {
    let u = (x - width / 2.0) / (width / 2.0);
    let v = y / height;
    let a = 0.9 * u * (1.2 - v) + 0.25 * (PI * v).sin() * u * u;
    a.rem_euclid(PI)
}

/// `n` minutiae scattered over an elliptical finger region with ridge
/// directions taken from [`global_flow`] with a random sense.
///
/// Positions are rejection-sampled with [`MIN_SPACING`]; if the region is too
/// crowded the spacing is relaxed so exactly `n` points are always produced.
pub fn random_template(seed: Seed, n: usize, width: u32, height: u32) -> MinutiaeTemplate {
    let mut rng = seed.rng();
    let (w, h) = (width as f64, height as f64);
    let (cx, cy) = (w / 2.0, h / 2.0);
    let (rx, ry) = (0.38 * w, 0.38 * h);
    let mut ms: Vec<Minutia> = Vec::with_capacity(n);
    let mut spacing = MIN_SPACING;
    let mut misses = 0;
    while ms.len() < n {
        let x = rng.random_range(cx - rx..cx + rx);
        let y = rng.random_range(cy - ry..cy + ry);
        let inside = ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0;
        let (px, py) = (x.round(), y.round());
        if !inside || ms.iter().any(|m| (m.x as f64 - px).hypot(m.y as f64 - py) < spacing) {
            misses += 1;
            if misses > 2000 {
                spacing *= 0.9;
                misses = 0;
            }
            continue;
        }
        let flow = global_flow(px, py, w, h);
        let theta = if rng.random_bool(0.5) { flow } else { flow + PI };
        let kind = if rng.random_bool(0.5) {
            MinutiaKind::Termination
        } else {
            MinutiaKind::Bifurcation
        };
        ms.push(Minutia::new(px as u32, py as u32, wrap_angle(theta), kind));
    }
    MinutiaeTemplate::with_minutiae(width, height, RESOLUTION, ms).expect("generated minutiae are in bounds")
}
