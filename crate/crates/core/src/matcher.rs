//! In-frame minutiae matcher: greedy one-to-one pairing and a weighted score.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_8};

use thiserror::Error;

use crate::model::{decide, ridge_angle_diff, Decision, MatchScore, Minutia, MinutiaeTemplate};

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("dist_tol must be positive, got {0}")]
    DistTol(f64),
    #[error("angle_tol must lie in (0, pi/2], got {0}")]
    AngleTol(f64),
    #[error("tau must lie in [0, 1], got {0}")]
    Tau(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    /// Pixels.
    pub dist_tol: f64,
    /// Radians.
    pub angle_tol: f64,
    pub tau: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            dist_tol: 12.0,
            angle_tol: FRAC_PI_8,
            tau: 0.7,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.dist_tol > 0.0) {
            return Err(ParamError::DistTol(self.dist_tol));
        }
        if !(self.angle_tol > 0.0 && self.angle_tol <= FRAC_PI_2) {
            return Err(ParamError::AngleTol(self.angle_tol));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(ParamError::Tau(self.tau));
        }
        Ok(())
    }

    /// Whether the pair may be matched at all.
    #[inline]
    pub fn eligible(&self, a: &Minutia, b: &Minutia) -> Option<(f64, f64)> {
        if a.kind != b.kind {
            return None;
        }
        let d = a.distance(b);
        if d > self.dist_tol {
            return None;
        }
        let dt = ridge_angle_diff(a.theta, b.theta);
        if dt > self.angle_tol {
            return None;
        }
        Some((d, dt))
    }

    /// Pair weight `(1 - d/dist_tol)(1 - dθ/angle_tol)`.
    #[inline]
    pub fn weight(&self, d: f64, dtheta: f64) -> f64 {
        let fd = (1.0 - d / self.dist_tol).clamp(0.0, 1.0);
        let ft = (1.0 - dtheta / self.angle_tol).clamp(0.0, 1.0);
        fd * ft
    }
}

/// One matched pair with its geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub dist: f64,
    pub dtheta: f64,
}

/// Disjoint index pairs between two templates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pairing {
    pub pairs: Vec<Pair>,
    /// Eligible candidates enumerated before the one-to-one filter.
    pub candidates: usize,
}

impl Pairing {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn total_weight(&self, p: &MatchParams) -> f64 {
        self.pairs.iter().map(|q| p.weight(q.dist, q.dtheta)).sum()
    }
}

/// Greedy pairing: all eligible candidates sorted by distance, then angle
/// difference, then `(i, j)`; each accepted while both endpoints are free.
pub fn pair_minutiae(a: &MinutiaeTemplate, b: &MinutiaeTemplate, p: &MatchParams) -> Pairing {
    let (ma, mb) = (a.minutiae(), b.minutiae());
    let mut cands = Vec::new();
    for (i, x) in ma.iter().enumerate() {
        for (j, y) in mb.iter().enumerate() {
            if let Some((dist, dtheta)) = p.eligible(x, y) {
                cands.push(Pair { a: i, b: j, dist, dtheta });
            }
        }
    }
    let candidates = cands.len();
    cands.sort_by(|u, v| {
        u.dist
            .partial_cmp(&v.dist)
            .unwrap_or(Ordering::Equal)
            .then(u.dtheta.partial_cmp(&v.dtheta).unwrap_or(Ordering::Equal))
            .then((u.a, u.b).cmp(&(v.a, v.b)))
    });
    let mut used_a = vec![false; ma.len()];
    let mut used_b = vec![false; mb.len()];
    let mut pairs = Vec::new();
    for c in cands {
        if !used_a[c.a] && !used_b[c.b] {
            used_a[c.a] = true;
            used_b[c.b] = true;
            pairs.push(c);
        }
    }
    Pairing { pairs, candidates }
}

/// Score from an already-computed pairing.
pub fn score_pairing(pairing: &Pairing, na: usize, nb: usize, p: &MatchParams) -> MatchScore {
    let denom = na.max(nb).max(1) as f64;
    MatchScore::new(pairing.total_weight(p) / denom)
}

pub fn compare_minutiae(a: &MinutiaeTemplate, b: &MinutiaeTemplate, p: &MatchParams) -> MatchScore {
    let pairing = pair_minutiae(a, b, p);
    score_pairing(&pairing, a.len(), b.len(), p)
}

/// Compares and applies the acceptance threshold `p.tau`.
pub fn verify(probe: &MinutiaeTemplate, enrolled: &MinutiaeTemplate, p: &MatchParams) -> (MatchScore, Decision) {
    let s = compare_minutiae(probe, enrolled, p);
    (s, decide(s, p.tau))
}
