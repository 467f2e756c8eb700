use crate::model::MinutiaeTemplate;

use super::{SynthesisError, SynthesisParams};

/// Fingerprint silhouette: four quarter-ellipse arcs around `center`.
///
/// `a1`/`a2` are the left/right horizontal semi-axes and `b1`/`b2` the
/// upper/lower vertical ones (image y grows downwards). The central
/// rectangle joining the arcs is degenerate, the horizontal line through
/// the center, so the four parameters fully determine the region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaModel {
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
    pub center: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Param {
    B1,
    B2,
    A1,
    A2,
}

impl AreaModel {
    fn axes_for(&self, dx: f64, dy: f64) -> (f64, f64) {
        let a = if dx < 0.0 { self.a1 } else { self.a2 };
        let b = if dy < 0.0 { self.b1 } else { self.b2 };
        (a, b)
    }

    /// Normalised ellipse radius; `<= 1` inside.
    fn level(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (a, b) = self.axes_for(dx, dy);
        let term = |d: f64, s: f64| {
            if d == 0.0 {
                0.0
            } else if s <= 0.0 {
                f64::INFINITY
            } else {
                (d / s) * (d / s)
            }
        };
        term(dx, a) + term(dy, b)
    }

    /// Boundary counts as inside.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.level(x, y) <= 1.0 + 1e-9
    }

    pub fn sum(&self) -> f64 {
        self.a1 + self.a2 + self.b1 + self.b2
    }

    /// Row-major mask over a `width × height` grid of pixel centres.
    pub fn mask(&self, width: usize, height: usize) -> Vec<bool> {
        let mut m = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                m.push(self.contains(x as f64, y as f64));
            }
        }
        m
    }

    fn get(&self, p: Param) -> f64 {
        match p {
            Param::B1 => self.b1,
            Param::B2 => self.b2,
            Param::A1 => self.a1,
            Param::A2 => self.a2,
        }
    }

    fn bump(&mut self, p: Param) {
        match p {
            Param::B1 => self.b1 += 1.0,
            Param::B2 => self.b2 += 1.0,
            Param::A1 => self.a1 += 1.0,
            Param::A2 => self.a2 += 1.0,
        }
    }
}

pub fn area_contains(m: &AreaModel, point: (f64, f64)) -> bool {
    m.contains(point.0, point.1)
}

/// Point `margin` px radially outward from `center`; the center itself stays put.
fn pushed_out(center: (f64, f64), x: f64, y: f64, margin: f64) -> (f64, f64) {
    let (dx, dy) = (x - center.0, y - center.1);
    let r = dx.hypot(dy);
    if r == 0.0 {
        return (x, y);
    }
    let k = (r + margin) / r;
    (center.0 + dx * k, center.1 + dy * k)
}

/// Greedy silhouette fit: start every parameter at `p.margin` and grow one
/// parameter by 1 px at a time until every minutia, pushed `p.margin` px
/// away from the centroid, is inside. The clearance keeps extreme minutiae
/// off the silhouette edge, where extraction discards them.
pub fn fit_area(t: &MinutiaeTemplate, p: &SynthesisParams) -> Result<AreaModel, SynthesisError> {
    let ms = t.minutiae();
    if ms.is_empty() {
        return Err(SynthesisError::EmptyTemplate);
    }
    let n = ms.len() as f64;
    let cx = ms.iter().map(|m| m.x as f64).sum::<f64>() / n;
    let cy = ms.iter().map(|m| m.y as f64).sum::<f64>() / n;
    let margin = p.margin;
    let mut area = AreaModel {
        b1: margin,
        b2: margin,
        a1: margin,
        a2: margin,
        center: (cx, cy),
    };
    let cap = |q: Param| match q {
        Param::A1 | Param::A2 => t.width() as f64,
        Param::B1 | Param::B2 => t.height() as f64,
    };
    let targets: Vec<(f64, f64)> = ms.iter().map(|m| pushed_out((cx, cy), m.x as f64, m.y as f64, margin)).collect();
    let limit = (t.width() + t.height()) as usize * 4;
    for _ in 0..limit {
        let Some(&(x, y)) = targets.iter().find(|&&(x, y)| !area.contains(x, y)) else {
            break;
        };
        let (dx, dy) = (x - cx, y - cy);
        let vertical = if dy < 0.0 { Param::B1 } else { Param::B2 };
        let horizontal = if dx < 0.0 { Param::A1 } else { Param::A2 };
        let before = area.level(x, y);
        let mut best: Option<(Param, f64)> = None;
        // listed in tie-break priority order
        for q in [Param::B1, Param::B2, Param::A1, Param::A2] {
            if (q != vertical && q != horizontal) || area.get(q) + 1.0 > cap(q) {
                continue;
            }
            let mut trial = area;
            trial.bump(q);
            let gain = before - trial.level(x, y);
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((q, gain));
            }
        }
        match best {
            Some((q, _)) => area.bump(q),
            None => break,
        }
    }
    Ok(area)
}
