use std::f64::consts::PI;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::analysis::OrientationField;
use crate::model::{clamp_pixel, GrayImage, MinutiaKind, MinutiaeTemplate};

use super::area::AreaModel;
use super::{SynthesisError, SynthesisParams};

const BACKGROUND: u8 = 128;
const ORIENTATION_BINS: usize = 90;
/// Normalised Gabor responses are multiplied by this before clamping.
const GAIN: f64 = 8.0;

/// Per-pixel "known" flags for ridge growth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnownMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl KnownMask {
    pub fn empty(width: usize, height: usize) -> Self {
        KnownMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

/// Draws each minutia's prototype on a mid-gray canvas.
///
/// A prototype is the ridge pattern of a single phase vortex,
/// `cos(k·across + atan2(across, along))`, inside a disk of radius
/// `prototype_size / 2`. For a termination the ridge leaves the point along
/// `theta` and the two neighbouring ridges close in on the far side; a
/// bifurcation is the same pattern shifted by half a period, so its stem
/// runs along `theta + π` and its branches open towards `theta`. Ridges are
/// `round(ridge_period / 3)` px wide. The whole disk becomes known; later
/// minutiae overwrite earlier ones where disks overlap.
pub fn stamp_prototypes(
    t: &MinutiaeTemplate,
    _field: &OrientationField,
    p: &SynthesisParams,
) -> (GrayImage, KnownMask) {
    let (w, h) = (t.width() as usize, t.height() as usize);
    let mut img = GrayImage::filled(w, h, BACKGROUND);
    let mut mask = KnownMask::empty(w, h);
    let r = (p.prototype_size / 2) as i64;
    let k = 2.0 * PI / p.ridge_period;
    // a ridge occupies the phase band |φ| < π·width/period
    let ridge_cos = (PI * (p.ridge_period / 3.0).round() / p.ridge_period).cos();
    for m in t.minutiae() {
        let (st, ct) = m.theta.sin_cos();
        let offset = match m.kind {
            MinutiaKind::Termination => 0.0,
            MinutiaKind::Bifurcation => PI,
        };
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let (x, y) = (m.x as i64 + dx, m.y as i64 + dy);
                if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                    continue;
                }
                let (fx, fy) = (dx as f64, dy as f64);
                let along = fx * ct + fy * st;
                let across = -fx * st + fy * ct;
                let phase = k * across + across.atan2(along) + offset;
                let v = if phase.cos() > ridge_cos { 0 } else { 255 };
                img.set(x as usize, y as usize, v);
                mask.set(x as usize, y as usize, true);
            }
        }
    }
    (img, mask)
}

struct Kernel {
    taps: Vec<(i64, i64, f64)>,
}

fn kernel_bank(period: f64) -> Vec<Kernel> {
    let sigma = period / 2.0;
    let radius = (2.0 * sigma).ceil() as i64;
    (0..ORIENTATION_BINS)
        .map(|b| {
            let theta = b as f64 * PI / ORIENTATION_BINS as f64;
            let (s, c) = theta.sin_cos();
            let mut taps = Vec::new();
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let d2 = (dx * dx + dy * dy) as f64;
                    if d2 > (radius * radius) as f64 || (dx == 0 && dy == 0) {
                        continue;
                    }
                    // across-ridge coordinate
                    let u = -(dx as f64) * s + dy as f64 * c;
                    let g = (-d2 / (2.0 * sigma * sigma)).exp() * (2.0 * PI * u / period).cos();
                    taps.push((dx, dy, g));
                }
            }
            Kernel { taps }
        })
        .collect()
}

fn bin_of(angle: f64) -> usize {
    let b = (angle / PI * ORIENTATION_BINS as f64).round() as usize;
    b % ORIENTATION_BINS
}

struct Canvas<'a> {
    w: usize,
    h: usize,
    values: &'a [u8],
    known: &'a [bool],
}

impl Canvas<'_> {
    fn grow_value(&self, x: usize, y: usize, k: &Kernel) -> u8 {
        let (mut acc, mut norm) = (0.0, 0.0);
        for &(dx, dy, g) in &k.taps {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= self.w as i64 || ny >= self.h as i64 {
                continue;
            }
            let i = ny as usize * self.w + nx as usize;
            if !self.known[i] {
                continue;
            }
            acc += g * (self.values[i] as f64 - 128.0);
            norm += g.abs();
        }
        if norm == 0.0 {
            return BACKGROUND;
        }
        clamp_pixel(128.0 + GAIN * 127.0 * acc / (127.0 * norm))
    }

    fn touches_known(&self, x: usize, y: usize) -> bool {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if (dx != 0 || dy != 0)
                    && nx >= 0
                    && ny >= 0
                    && nx < self.w as i64
                    && ny < self.h as i64
                    && self.known[ny as usize * self.w + nx as usize]
                {
                    return true;
                }
            }
        }
        false
    }
}

/// Frontier-driven Gabor ridge growth from the known region.
///
/// Each iteration assigns every unknown in-area pixel that touches the known
/// region, all evaluated against the image as it stood when the iteration
/// began. Pixels outside the area come out white. With
/// `growth_iters_max == 0` the seed image is returned untouched.
pub fn grow_ridges(
    seed: &GrayImage,
    mask: &KnownMask,
    field: &OrientationField,
    area: &AreaModel,
    p: &SynthesisParams,
) -> Result<GrayImage, SynthesisError> {
    let (w, h) = (seed.width(), seed.height());
    if mask.width() != w || mask.height() != h {
        return Err(SynthesisError::MaskMismatch);
    }
    let inside = area.mask(w, h);
    if mask.is_empty() && !inside.iter().any(|&b| b) {
        return Err(SynthesisError::NoSeed);
    }
    if p.growth_iters_max == 0 {
        return Ok(seed.clone());
    }
    let bank = kernel_bank(p.ridge_period);
    let mut values = seed.pixels().to_vec();
    let mut known = mask.bits().to_vec();
    for _ in 0..p.growth_iters_max {
        let canvas = Canvas {
            w,
            h,
            values: &values,
            known: &known,
        };
        let frontier: Vec<usize> = (0..w * h)
            .filter(|&i| inside[i] && !known[i] && canvas.touches_known(i % w, i / w))
            .collect();
        if frontier.is_empty() {
            break;
        }
        let eval = |&i: &usize| {
            let (x, y) = (i % w, i / w);
            canvas.grow_value(x, y, &bank[bin_of(field.angle_at(x, y))])
        };
        #[cfg(feature = "parallel")]
        let grown: Vec<u8> = if crate::par::parallel_enabled() {
            frontier.par_iter().map(eval).collect()
        } else {
            frontier.iter().map(eval).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let grown: Vec<u8> = frontier.iter().map(eval).collect();
        for (&i, v) in frontier.iter().zip(grown) {
            values[i] = v;
            known[i] = true;
        }
    }
    for i in 0..w * h {
        if !inside[i] {
            values[i] = 255;
        }
    }
    Ok(GrayImage::from_pixels(w, h, values).expect("dimensions preserved"))
}
