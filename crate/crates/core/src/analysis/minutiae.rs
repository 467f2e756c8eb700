use std::f64::consts::PI;

use crate::model::{wrap_angle, GrayImage, Minutia, MinutiaKind, MinutiaeTemplate};

use super::orientation::{orientation_from_image, OrientationField};
use super::thinning::{binarize_and_thin, crossing_number, SkeletonImage};
use super::AnalysisError;

/// Settings for crossing-number extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractParams {
    /// Copied into the output template.
    pub resolution: u32,
    /// Orientation cell size in pixels.
    pub cell: usize,
    /// Minutiae closer than this to the foreground border are dropped.
    pub border: f64,
    /// Of two minutiae closer than this, only the first in scan order is kept.
    pub merge: f64,
    /// Minimum intensity standard deviation for a cell to count as foreground.
    pub foreground_std: f64,
    /// Skeleton steps followed when resolving a minutia's direction.
    pub trace_len: usize,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            resolution: 500,
            cell: 8,
            border: 10.0,
            merge: 8.0,
            foreground_std: 12.0,
            trace_len: 8,
        }
    }
}

pub const MIN_EXTRACT_SIDE: usize = 32;

/// Per-pixel foreground mask from cell intensity spread.
///
/// Cells whose standard deviation reaches `min_std` are foreground; a
/// one-cell morphological closing then fills small low-contrast holes such
/// as the gap in front of a ridge ending.
pub fn foreground_mask(img: &GrayImage, cell: usize, min_std: f64) -> Vec<bool> {
    let (w, h) = (img.width(), img.height());
    let (cols, rows) = OrientationField::grid_for(w, h, cell);
    let mut sum = vec![0.0f64; cols * rows];
    let mut sq = vec![0.0f64; cols * rows];
    let mut cnt = vec![0usize; cols * rows];
    for y in 0..h {
        for x in 0..w {
            let i = (y / cell) * cols + x / cell;
            let v = img.get(x, y) as f64;
            sum[i] += v;
            sq[i] += v * v;
            cnt[i] += 1;
        }
    }
    let raw: Vec<bool> = (0..cols * rows)
        .map(|i| {
            let n = cnt[i] as f64;
            let mean = sum[i] / n;
            (sq[i] / n - mean * mean).max(0.0).sqrt() >= min_std
        })
        .collect();
    let window = |src: &[bool], want: bool| -> Vec<bool> {
        (0..cols * rows)
            .map(|i| {
                let (c, r) = ((i % cols) as i64, (i / cols) as i64);
                let hit = (-1..=1).any(|dr| {
                    (-1..=1).any(|dc| {
                        let (cc, rr) = (c + dc, r + dr);
                        let v = cc >= 0 && rr >= 0 && cc < cols as i64 && rr < rows as i64 && src[rr as usize * cols + cc as usize];
                        v == want
                    })
                });
                // dilation: any foreground neighbour; erosion: no background neighbour
                if want { hit } else { !hit }
            })
            .collect()
    };
    let cell_fg = window(&window(&raw, true), false);
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            mask[y * w + x] = cell_fg[(y / cell) * cols + x / cell];
        }
    }
    mask
}

/// True when every pixel within `radius` of `(x, y)` is inside the image and foreground.
fn deep_inside(mask: &[bool], w: usize, h: usize, x: usize, y: usize, radius: f64) -> bool {
    let r = radius.ceil() as i64;
    let r2 = radius * radius;
    for dy in -r..=r {
        for dx in -r..=r {
            if (dx * dx + dy * dy) as f64 > r2 {
                continue;
            }
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                return false;
            }
            if !mask[ny as usize * w + nx as usize] {
                return false;
            }
        }
    }
    true
}

const RING: [(i64, i64); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

/// Follows a skeleton branch leaving `(x, y)` through ring slot `first`;
/// returns the unit direction from the start to where the walk stopped.
fn trace_branch(s: &SkeletonImage, x: usize, y: usize, first: usize, steps: usize) -> Option<(f64, f64)> {
    let (sx, sy) = (x as i64, y as i64);
    let mut prev = vec![(sx, sy)];
    let (dx, dy) = RING[first];
    let mut cur = (sx + dx, sy + dy);
    prev.push(cur);
    for _ in 1..steps {
        // prefer edge neighbours so the walk does not cut corners
        let next = [0usize, 2, 4, 6, 1, 3, 5, 7].iter().map(|&k| RING[k]).find_map(|(ox, oy)| {
            let c = (cur.0 + ox, cur.1 + oy);
            let near_start = (c.0 - sx).abs() <= 1 && (c.1 - sy).abs() <= 1;
            (s.get(c.0, c.1) && !prev.contains(&c) && !near_start).then_some(c)
        });
        match next {
            Some(c) => {
                prev.push(c);
                cur = c;
            }
            None => break,
        }
    }
    let (vx, vy) = ((cur.0 - sx) as f64, (cur.1 - sy) as f64);
    let n = vx.hypot(vy);
    (n > 0.0).then(|| (vx / n, vy / n))
}

/// Start slots of each ridge run around the ring.
fn branch_starts(ring: &[bool; 8]) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..8).filter(|&k| ring[k] && !ring[(k + 7) % 8]).collect();
    // within a run prefer an edge neighbour as the entry point
    for st in starts.iter_mut() {
        if *st % 2 == 1 && ring[(*st + 1) % 8] {
            *st = (*st + 1) % 8;
        }
    }
    starts
}

/// Orients the undirected field angle `ridge` to agree with direction `(vx, vy)`.
fn orient(ridge: f64, vx: f64, vy: f64) -> f64 {
    let (s, c) = ridge.sin_cos();
    if c * vx + s * vy >= 0.0 {
        wrap_angle(ridge)
    } else {
        wrap_angle(ridge + PI)
    }
}

fn minutia_theta(s: &SkeletonImage, field: &OrientationField, x: usize, y: usize, kind: MinutiaKind, steps: usize) -> f64 {
    let ridge = field.angle_at(x, y);
    let ring = s.neighbours(x, y);
    let dirs: Vec<(f64, f64)> = branch_starts(&ring)
        .into_iter()
        .filter_map(|k| trace_branch(s, x, y, k, steps))
        .collect();
    match kind {
        MinutiaKind::Termination => match dirs.first() {
            Some(&(vx, vy)) => orient(ridge, vx, vy),
            None => wrap_angle(ridge),
        },
        MinutiaKind::Bifurcation => {
            if dirs.len() < 2 {
                return wrap_angle(ridge);
            }
            // the stem is the branch farthest from its nearest sibling
            let stem = (0..dirs.len())
                .max_by(|&i, &j| {
                    let sep = |a: usize| {
                        (0..dirs.len())
                            .filter(|&b| b != a)
                            .map(|b| dirs[a].0 * dirs[b].0 + dirs[a].1 * dirs[b].1)
                            .fold(f64::NEG_INFINITY, f64::max)
                    };
                    // larger separation = smaller maximal cosine
                    sep(j).partial_cmp(&sep(i)).unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(0);
            orient(ridge, -dirs[stem].0, -dirs[stem].1)
        }
    }
}

/// Crossing-number minutiae extraction.
pub fn extract_minutiae(img: &GrayImage, p: &ExtractParams) -> Result<MinutiaeTemplate, AnalysisError> {
    let (w, h) = (img.width(), img.height());
    if w < MIN_EXTRACT_SIDE || h < MIN_EXTRACT_SIDE {
        return Err(AnalysisError::ImageTooSmall {
            width: w,
            height: h,
            min: MIN_EXTRACT_SIDE,
        });
    }
    let skeleton = binarize_and_thin(img)?;
    let field = orientation_from_image(img, p.cell)?.smoothed();
    let mask = foreground_mask(img, p.cell, p.foreground_std);
    let mut kept: Vec<Minutia> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !skeleton.get(x as i64, y as i64) {
                continue;
            }
            let kind = match crossing_number(&skeleton.neighbours(x, y)) {
                1 => MinutiaKind::Termination,
                3 => MinutiaKind::Bifurcation,
                _ => continue,
            };
            if !deep_inside(&mask, w, h, x, y, p.border) {
                continue;
            }
            let theta = minutia_theta(&skeleton, &field, x, y, kind, p.trace_len);
            let m = Minutia::new(x as u32, y as u32, theta, kind);
            if kept.iter().all(|k| k.distance(&m) >= p.merge) {
                kept.push(m);
            }
        }
    }
    let res = p.resolution;
    MinutiaeTemplate::with_minutiae(w as u32, h as u32, res, kept).map_err(AnalysisError::Template)
}
