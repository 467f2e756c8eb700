use std::f64::consts::{FRAC_PI_2, PI};

use crate::model::{fold_pi, GrayImage};

use super::AnalysisError;

/// Per-cell undirected ridge orientation `θ ∈ [0, π)` plus a coherence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationField {
    pub cols: usize,
    pub rows: usize,
    /// Pixels per cell side.
    pub cell: usize,
    pub angles: Vec<f64>,
    pub coherence: Vec<f64>,
}

impl OrientationField {
    /// Field with one angle everywhere and full coherence.
    pub fn constant(cols: usize, rows: usize, cell: usize, angle: f64) -> Self {
        OrientationField {
            cols,
            rows,
            cell,
            angles: vec![fold_pi(angle); cols * rows],
            coherence: vec![1.0; cols * rows],
        }
    }

    /// Grid size covering a `width × height` image with `cell`-pixel cells.
    pub fn grid_for(width: usize, height: usize, cell: usize) -> (usize, usize) {
        (width.div_ceil(cell), height.div_ceil(cell))
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    pub fn angle(&self, col: usize, row: usize) -> f64 {
        self.angles[self.index(col, row)]
    }

    /// Cell containing pixel `(x, y)`, clamped to the grid.
    pub fn cell_of(&self, x: usize, y: usize) -> (usize, usize) {
        ((x / self.cell).min(self.cols - 1), (y / self.cell).min(self.rows - 1))
    }

    pub fn angle_at(&self, x: usize, y: usize) -> f64 {
        let (c, r) = self.cell_of(x, y);
        self.angle(c, r)
    }

    pub fn coherence_at(&self, x: usize, y: usize) -> f64 {
        let (c, r) = self.cell_of(x, y);
        self.coherence[self.index(c, r)]
    }

    /// Doubled-angle averaging over each cell's 3×3 neighbourhood, weighted
    /// by coherence. Coherence is left untouched.
    pub fn smoothed(&self) -> OrientationField {
        let mut out = self.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let (mut sx, mut sy) = (0.0, 0.0);
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (cc, rr) = (c as i64 + dc, r as i64 + dr);
                        if cc < 0 || rr < 0 || cc >= self.cols as i64 || rr >= self.rows as i64 {
                            continue;
                        }
                        let i = self.index(cc as usize, rr as usize);
                        let w = self.coherence[i];
                        sx += w * (2.0 * self.angles[i]).cos();
                        sy += w * (2.0 * self.angles[i]).sin();
                    }
                }
                if sx.hypot(sy) > 1e-12 {
                    let i = self.index(c, r);
                    out.angles[i] = fold_pi(0.5 * sy.atan2(sx));
                }
            }
        }
        out
    }
}

/// Gradient-based orientation estimate over `cell × cell` blocks.
///
/// Gradients are 3×3 central differences on interior pixels; each cell
/// accumulates `(Σ gx²−gy², Σ 2gx·gy)` and the ridge angle is the doubled-angle
/// mean rotated by π/2.
pub fn orientation_from_image(img: &GrayImage, cell: usize) -> Result<OrientationField, AnalysisError> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(AnalysisError::ImageTooSmall {
            width: w,
            height: h,
            min: 3,
        });
    }
    let cell = cell.max(1);
    let (cols, rows) = OrientationField::grid_for(w, h, cell);
    let n = cols * rows;
    let mut a = vec![0.0f64; n];
    let mut b = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    let px = img.pixels();
    for y in 1..h - 1 {
        let row = y * w;
        for x in 1..w - 1 {
            let gx = (px[row + x + 1] as f64 - px[row + x - 1] as f64) * 0.5;
            let gy = (px[row + w + x] as f64 - px[row - w + x] as f64) * 0.5;
            let i = (y / cell) * cols + x / cell;
            a[i] += gx * gx - gy * gy;
            b[i] += 2.0 * gx * gy;
            e[i] += gx * gx + gy * gy;
        }
    }
    let mut angles = vec![0.0; n];
    let mut coherence = vec![0.0; n];
    for i in 0..n {
        if e[i] > 0.0 {
            angles[i] = fold_pi(0.5 * b[i].atan2(a[i]) + FRAC_PI_2);
            coherence[i] = (a[i].hypot(b[i]) / e[i]).clamp(0.0, 1.0);
        }
    }
    debug_assert!(angles.iter().all(|t| (0.0..PI).contains(t)));
    Ok(OrientationField {
        cols,
        rows,
        cell,
        angles,
        coherence,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::ridge_angle_diff;

    /// Sinusoidal stripes whose ridges run along direction `phi`.
    pub(crate) fn stripes(w: usize, h: usize, period: f64, phi: f64) -> GrayImage {
        let (s, c) = phi.sin_cos();
        GrayImage::from_fn(w, h, |x, y| {
            let across = -(x as f64) * s + y as f64 * c;
            (127.5 + 127.0 * (2.0 * PI * across / period).cos()).round() as u8
        })
    }

    fn interior_max_error(f: &OrientationField, expected: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 1..f.rows - 1 {
            for c in 1..f.cols - 1 {
                worst = worst.max(ridge_angle_diff(f.angle(c, r), expected));
            }
        }
        worst
    }

    #[test]
    fn horizontal_stripes() {
        let img = stripes(96, 96, 9.0, 0.0);
        let f = orientation_from_image(&img, 8).unwrap();
        assert!(interior_max_error(&f, 0.0) < 0.05);
        for r in 1..f.rows - 1 {
            for c in 1..f.cols - 1 {
                assert!(f.coherence[f.index(c, r)] > 0.9);
            }
        }
    }

    #[test]
    fn diagonal_stripes() {
        let img = stripes(96, 96, 9.0, PI / 4.0);
        let f = orientation_from_image(&img, 8).unwrap();
        assert!(interior_max_error(&f, PI / 4.0) < 0.05);
    }

    #[test]
    fn uniform_image_has_no_coherence() {
        let img = GrayImage::filled(40, 40, 128);
        let f = orientation_from_image(&img, 8).unwrap();
        assert!(f.coherence.iter().all(|&c| c == 0.0));
        assert!(f.angles.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn rotation_equivariance() {
        let base = 0.3;
        for k in 0..12 {
            let phi = k as f64 * PI / 12.0;
            let f0 = orientation_from_image(&stripes(96, 96, 9.0, base), 8).unwrap();
            let f1 = orientation_from_image(&stripes(96, 96, 9.0, base + phi), 8).unwrap();
            for r in 1..f0.rows - 1 {
                for c in 1..f0.cols - 1 {
                    let shifted = fold_pi(f0.angle(c, r) + phi);
                    assert!(ridge_angle_diff(shifted, f1.angle(c, r)) < 0.08);
                }
            }
        }
    }

    #[test]
    fn too_small() {
        assert!(orientation_from_image(&GrayImage::filled(2, 5, 0), 8).is_err());
    }
}
