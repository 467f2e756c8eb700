use crate::model::GrayImage;

use super::AnalysisError;

const WINDOW: usize = 15;
const OFFSET: f64 = 2.0;

/// Binary ridge mask after thinning; `true` marks a ridge pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonImage {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl SkeletonImage {
    pub fn empty(width: usize, height: usize) -> Self {
        SkeletonImage {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return false;
        }
        self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Ring of the eight neighbours, clockwise from north:
    /// N, NE, E, SE, S, SW, W, NW.
    pub fn neighbours(&self, x: usize, y: usize) -> [bool; 8] {
        let (x, y) = (x as i64, y as i64);
        [
            self.get(x, y - 1),
            self.get(x + 1, y - 1),
            self.get(x + 1, y),
            self.get(x + 1, y + 1),
            self.get(x, y + 1),
            self.get(x - 1, y + 1),
            self.get(x - 1, y),
            self.get(x - 1, y - 1),
        ]
    }

    /// True if some 2×2 block is entirely ridge.
    pub fn has_block(&self) -> bool {
        (0..self.height.saturating_sub(1)).any(|y| {
            (0..self.width.saturating_sub(1)).any(|x| self.block_at(x, y))
        })
    }

    fn block_at(&self, x: usize, y: usize) -> bool {
        let (x, y) = (x as i64, y as i64);
        self.get(x, y) && self.get(x + 1, y) && self.get(x, y + 1) && self.get(x + 1, y + 1)
    }

    /// Number of 8-connected ridge components.
    pub fn components(&self) -> usize {
        let mut seen = vec![false; self.bits.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.bits.len() {
            if !self.bits[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (x, y) = ((i % self.width) as i64, (i / self.width) as i64);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if self.get(nx, ny) {
                            let j = ny as usize * self.width + nx as usize;
                            if !seen[j] {
                                seen[j] = true;
                                stack.push(j);
                            }
                        }
                    }
                }
            }
        }
        count
    }
}

/// Crossing number: half the number of value changes around the ring.
pub fn crossing_number(ring: &[bool; 8]) -> u8 {
    let changes: u8 = (0..8).map(|k| (ring[k] != ring[(k + 1) % 8]) as u8).sum();
    changes / 2
}

fn transitions_01(ring: &[bool; 8]) -> usize {
    (0..8).filter(|&k| !ring[k] && ring[(k + 1) % 8]).count()
}

/// Yokoi 8-connectivity number; a ridge pixel is simple iff it equals 1.
fn connectivity_8(ring: &[bool; 8]) -> i32 {
    // complement on the ring; edge neighbours sit at even indices
    let c = |k: usize| !ring[k % 8] as i32;
    [0, 2, 4, 6]
        .iter()
        .map(|&k| c(k) - c(k) * c(k + 1) * c(k + 2))
        .sum()
}

/// Ridge mask: pixels darker than their 15×15 local mean minus 2.
pub fn binarize(img: &GrayImage) -> SkeletonImage {
    let (w, h) = (img.width(), img.height());
    // summed-area table with a zero border row/column
    let mut sat = vec![0u64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0u64;
        for x in 0..w {
            row_sum += img.get(x, y) as u64;
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row_sum;
        }
    }
    let r = WINDOW / 2;
    let mut out = SkeletonImage::empty(w, h);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let sum = sat[y1 * (w + 1) + x1] + sat[y0 * (w + 1) + x0]
                - sat[y0 * (w + 1) + x1]
                - sat[y1 * (w + 1) + x0];
            let mean = sum as f64 / ((x1 - x0) * (y1 - y0)) as f64;
            out.set(x, y, (img.get(x, y) as f64) < mean - OFFSET);
        }
    }
    out
}

/// Two-subiteration thinning to a fixpoint.
///
/// Each subiteration marks Zhang–Suen candidates in parallel, then deletes
/// them in scan order only while they are still simple, so every deletion
/// preserves 8-connectivity. Once they converge, a pass breaks any remaining
/// 2×2 ridge block by deleting one simple pixel of it, and the subiterations
/// resume if that changed anything.
pub fn thin(mask: &SkeletonImage) -> SkeletonImage {
    let mut s = mask.clone();
    let (w, h) = (s.width, s.height);
    let mut marked = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            marked.clear();
            for y in 0..h {
                for x in 0..w {
                    if !s.bits[y * w + x] {
                        continue;
                    }
                    let n = s.neighbours(x, y);
                    let b = n.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&b) || transitions_01(&n) != 1 {
                        continue;
                    }
                    let (p2, p4, p6, p8) = (n[0], n[2], n[4], n[6]);
                    let ok = if pass == 0 {
                        !(p2 && p4 && p6) && !(p4 && p6 && p8)
                    } else {
                        !(p2 && p4 && p8) && !(p2 && p6 && p8)
                    };
                    if ok {
                        marked.push((x, y));
                    }
                }
            }
            for &(x, y) in &marked {
                let n = s.neighbours(x, y);
                let b = n.iter().filter(|&&v| v).count();
                if (2..=6).contains(&b) && transitions_01(&n) == 1 {
                    s.set(x, y, false);
                    changed = true;
                }
            }
        }
        // only once the subiterations have converged
        if !changed && !break_blocks(&mut s) {
            return s;
        }
    }
}

fn break_blocks(s: &mut SkeletonImage) -> bool {
    let mut changed = false;
    for y in 0..s.height.saturating_sub(1) {
        for x in 0..s.width.saturating_sub(1) {
            if !s.block_at(x, y) {
                continue;
            }
            for (px, py) in [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)] {
                let n = s.neighbours(px, py);
                let b = n.iter().filter(|&&v| v).count();
                if b >= 2 && connectivity_8(&n) == 1 {
                    s.set(px, py, false);
                    changed = true;
                    break;
                }
            }
        }
    }
    changed
}

pub fn binarize_and_thin(img: &GrayImage) -> Result<SkeletonImage, AnalysisError> {
    if img.width() < 3 || img.height() < 3 {
        return Err(AnalysisError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min: 3,
        });
    }
    Ok(thin(&binarize(img)))
}
