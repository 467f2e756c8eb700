use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::model::{GrayImage, Seed};

use super::area::AreaModel;
use super::SynthesisParams;

/// White speckles followed by a box blur, anywhere in the image.
pub fn add_noise(img: &GrayImage, p: &SynthesisParams, seed: Seed) -> GrayImage {
    add_noise_masked(img, None, p, seed)
}

/// Like [`add_noise`], with dot centres restricted to `area`.
pub fn add_noise_in(img: &GrayImage, area: &AreaModel, p: &SynthesisParams, seed: Seed) -> GrayImage {
    add_noise_masked(img, Some(area), p, seed)
}

fn add_noise_masked(img: &GrayImage, area: Option<&AreaModel>, p: &SynthesisParams, seed: Seed) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    let mut rng = seed.rng();
    let dots = (p.noise_dots * (w * h) as f64 / 1e4).round() as usize;
    let (rmin, rmax) = p.dot_radius;
    let mut placed = 0;
    // bounded rejection sampling for centres inside the area
    let mut attempts = 0;
    while placed < dots && attempts < dots * 100 {
        attempts += 1;
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let rx = rng.random_range(rmin..=rmax);
        let ry = rng.random_range(rmin..=rmax);
        if area.is_some_and(|a| !a.contains(cx, cy)) {
            continue;
        }
        placed += 1;
        let (x0, x1) = ((cx - rx).floor().max(0.0) as usize, ((cx + rx).ceil() as usize).min(w - 1));
        let (y0, y1) = ((cy - ry).floor().max(0.0) as usize, ((cy + ry).ceil() as usize).min(h - 1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                if dx * dx + dy * dy <= 1.0 {
                    out.set(x, y, 255);
                }
            }
        }
    }
    box_blur(&out, p.smoothing)
}

/// Mean filter over a `(2r+1)²` window with edge-clamped sampling.
pub fn box_blur(img: &GrayImage, radius: usize) -> GrayImage {
    if radius == 0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let r = radius as i64;
    let n = ((2 * r + 1) * (2 * r + 1)) as u32;
    GrayImage::from_fn(w, h, |x, y| {
        let mut s = 0u32;
        for dy in -r..=r {
            for dx in -r..=r {
                let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                s += img.get(sx, sy) as u32;
            }
        }
        ((s + n / 2) / n) as u8
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScarStyle {
    Erase,
    Scramble,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scar {
    pub center: (f64, f64),
    pub radius: f64,
    pub style: ScarStyle,
}

/// Digital obliteration: whiten or shuffle the pixels of each disk in turn.
pub fn obliterate(img: &GrayImage, scars: &[Scar], seed: Seed) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    let mut rng = seed.rng();
    for s in scars {
        let (cx, cy) = s.center;
        let r2 = s.radius * s.radius;
        let disk: Vec<(usize, usize)> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r2)
            .collect();
        match s.style {
            ScarStyle::Erase => {
                for &(x, y) in &disk {
                    out.set(x, y, 255);
                }
            }
            ScarStyle::Scramble => {
                let mut values: Vec<u8> = disk.iter().map(|&(x, y)| out.get(x, y)).collect();
                values.shuffle(&mut rng);
                for (&(x, y), v) in disk.iter().zip(values) {
                    out.set(x, y, v);
                }
            }
        }
    }
    out
}
