//! Simulated timing side channel of the minutiae matcher.
//!
//! The matcher's dominant loop enumerates eligible candidate pairs, so its
//! running time grows as a probe lines up with the enrolled template. Work is
//! counted in abstract units instead of measured, which keeps it reproducible.

use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::matcher::{pair_minutiae, score_pairing, MatchParams};
use crate::model::{decide, Decision, MinutiaeTemplate, Seed};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SideChannelError {
    #[error("no unblocked samples in the window")]
    EmptyWindow,
    #[error("invalid timing model: {0}")]
    InvalidModel(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingModel {
    pub base: u64,
    pub per_candidate: u64,
    pub noise_sd: f64,
    /// Hardened variant: every `na × nb` pair is examined regardless of
    /// geometry, so work no longer depends on how well the probe matches.
    pub constant_time: bool,
}

impl Default for TimingModel {
    fn default() -> Self {
        TimingModel {
            base: 50,
            per_candidate: 1,
            noise_sd: 2.0,
            constant_time: false,
        }
    }
}

impl TimingModel {
    pub fn hardened(self) -> Self {
        TimingModel {
            constant_time: true,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), SideChannelError> {
        if self.per_candidate < 1 {
            return Err(SideChannelError::InvalidModel("per_candidate must be at least 1"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(SideChannelError::InvalidModel("noise_sd must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Work for a comparison that enumerated `candidates` of `na × nb` pairs.
    pub fn work_units(&self, candidates: usize, na: usize, nb: usize, seed: Seed) -> u64 {
        let examined = if self.constant_time { na * nb } else { candidates };
        let clean = (self.base + self.per_candidate * examined as u64) as f64;
        let noise = if self.noise_sd > 0.0 {
            let n = Normal::new(0.0, self.noise_sd).expect("validated deviation");
            n.sample(&mut seed.rng()).round()
        } else {
            0.0
        };
        (clean + noise).max(0.0) as u64
    }
}

/// Decision plus elapsed work; never a score. `decision` is `None` when the
/// query was blocked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimedResponse {
    pub decision: Option<Decision>,
    pub work_units: u64,
}

pub fn timed_compare(
    a: &MinutiaeTemplate,
    b: &MinutiaeTemplate,
    p: &MatchParams,
    m: &TimingModel,
    seed: Seed,
) -> TimedResponse {
    let pairing = pair_minutiae(a, b, p);
    let score = score_pairing(&pairing, a.len(), b.len(), p);
    TimedResponse {
        decision: Some(decide(score, p.tau)),
        work_units: m.work_units(pairing.candidates, a.len(), b.len(), seed),
    }
}

/// Min-max normalises work over the unblocked samples. Blocked samples map to
/// `None`; a window of equal work maps to 0.5 throughout.
pub fn time_to_score_proxy(samples: &[TimedResponse]) -> Result<Vec<Option<f64>>, SideChannelError> {
    let live = samples.iter().filter(|s| s.decision.is_some()).map(|s| s.work_units);
    let (lo, hi) = live.fold(None, |acc: Option<(u64, u64)>, w| match acc {
        None => Some((w, w)),
        Some((lo, hi)) => Some((lo.min(w), hi.max(w))),
    })
    .ok_or(SideChannelError::EmptyWindow)?;
    Ok(samples
        .iter()
        .map(|s| {
            s.decision.map(|_| {
                if hi == lo {
                    0.5
                } else {
                    (s.work_units - lo) as f64 / (hi - lo) as f64
                }
            })
        })
        .collect())
}

/// Average ranks, 1-based; ties share the mean of their positions.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation, or `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
