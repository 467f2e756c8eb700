//! Hill-climbing attacks that only see what a verification endpoint reveals.

mod face;
mod fp;

use crate::model::{decide, Decision, MatchScore, Rng, Seed};

pub use face::{attack_face, FaceAttackConfig, FaceOracle};
pub use fp::{
    attack_fp, random_candidate, timing_attack, FpAttackConfig, FpConfigError, FpOracle, MoveWeights, TimedOracle,
    TimingAttackConfig,
};

/// What one query reveals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Response {
    Scored { score: MatchScore, decision: Decision },
    /// The score is withheld; only the decision is visible.
    DecisionOnly(Decision),
    /// A timed comparison: decision and elapsed work, no score.
    Timed { work_units: u64, decision: Decision },
    /// Refused by a rate limiter: no score and no decision.
    Blocked,
}

impl Response {
    /// The visible score, if any. Withheld and blocked scores read as `None`.
    pub fn score(&self) -> Option<f64> {
        match self {
            Response::Scored { score, .. } => Some(score.value()),
            _ => None,
        }
    }

    pub fn decision(&self) -> Option<Decision> {
        match *self {
            Response::Scored { decision, .. } | Response::DecisionOnly(decision) | Response::Timed { decision, .. } => {
                Some(decision)
            }
            Response::Blocked => None,
        }
    }

    pub fn accepted(&self) -> bool {
        self.decision() == Some(Decision::Accept)
    }

    pub fn is_blocked(&self) -> bool {
        matches!(self, Response::Blocked)
    }
}

/// A verification endpoint. Every query bumps the call counter by one.
pub trait ScoreOracle<C: ?Sized> {
    fn query(&mut self, candidate: &C) -> Response;
    fn calls(&self) -> u64;
}

impl<C: ?Sized, O: ScoreOracle<C> + ?Sized> ScoreOracle<C> for &mut O {
    fn query(&mut self, candidate: &C) -> Response {
        (**self).query(candidate)
    }

    fn calls(&self) -> u64 {
        (**self).calls()
    }
}

/// Wraps a plain similarity function.
pub struct FnOracle<F> {
    f: F,
    tau: f64,
    calls: u64,
}

impl<F> FnOracle<F> {
    pub fn new(f: F, tau: f64) -> Self {
        FnOracle { f, tau, calls: 0 }
    }
}

impl<C, F: FnMut(&C) -> f64> ScoreOracle<C> for FnOracle<F> {
    fn query(&mut self, candidate: &C) -> Response {
        self.calls += 1;
        let score = MatchScore::new((self.f)(candidate));
        Response::Scored {
            score,
            decision: decide(score, self.tau),
        }
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Succeeded,
    ExhaustedBudget,
    Stalled,
    Blocked,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [Outcome::Succeeded, Outcome::ExhaustedBudget, Outcome::Stalled, Outcome::Blocked];

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Succeeded => "succeeded",
            Outcome::ExhaustedBudget => "exhausted",
            Outcome::Stalled => "stalled",
            Outcome::Blocked => "blocked",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    /// 1-based oracle call index within the attack.
    pub call: u64,
    pub summary: String,
    /// Score or timing proxy as seen by the attacker; `None` when hidden or blocked.
    pub observed: Option<f64>,
    pub best: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackTrace {
    pub entries: Vec<TraceEntry>,
    pub outcome: Outcome,
}

impl AttackTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Call index of the first accepted query.
    pub fn first_accept(&self) -> Option<u64> {
        self.entries.iter().find(|e| e.accepted).map(|e| e.call)
    }

    pub fn best(&self) -> Option<f64> {
        self.entries.last().map(|e| e.best)
    }
}

/// Something that can be summarised on one trace line.
pub trait Summarize {
    fn summary(&self) -> String;
}

impl Summarize for crate::model::MinutiaeTemplate {
    fn summary(&self) -> String {
        format!("n={}", self.len())
    }
}

impl Summarize for crate::model::GrayImage {
    fn summary(&self) -> String {
        format!("mean={:.3}", self.mean())
    }
}

impl Summarize for i64 {
    fn summary(&self) -> String {
        self.to_string()
    }
}

/// The selection key an attacker can derive from a response. Hidden scores
/// degrade to the decision bit.
pub(crate) fn response_key(r: &Response) -> f64 {
    match *r {
        Response::Scored { score, .. } => score.value(),
        Response::Timed { work_units, .. } => work_units as f64,
        Response::DecisionOnly(d) => {
            if d.is_accept() {
                1.0
            } else {
                0.0
            }
        }
        Response::Blocked => f64::NEG_INFINITY,
    }
}

/// Accumulates trace rows and the running best key.
pub(crate) struct Recorder {
    entries: Vec<TraceEntry>,
    best: f64,
}

impl Recorder {
    pub fn new() -> Self {
        Recorder {
            entries: Vec::new(),
            best: f64::NEG_INFINITY,
        }
    }

    /// Records one query and returns its key.
    pub fn record(&mut self, summary: String, r: &Response, key: f64) -> f64 {
        self.best = self.best.max(key);
        self.entries.push(TraceEntry {
            call: self.entries.len() as u64 + 1,
            summary,
            observed: match r {
                Response::Blocked | Response::DecisionOnly(_) => None,
                _ => Some(key),
            },
            best: self.best.max(0.0),
            accepted: r.accepted(),
        });
        key
    }

    pub fn len(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn finish(self, outcome: Outcome) -> AttackTrace {
        AttackTrace {
            entries: self.entries,
            outcome,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_calls: u64,
    /// Consecutive non-improving proposals before giving up.
    pub stall_limit: usize,
    pub stop_on_accept: bool,
}

/// Generic strict-improvement climber: query one neighbour of the current
/// best at a time and adopt it iff its key is strictly larger.
pub fn hill_climb<C, O, P>(oracle: &mut O, init: C, mut propose: P, stop: &StopRule, seed: Seed) -> (C, AttackTrace)
where
    C: Clone + Summarize,
    O: ScoreOracle<C> + ?Sized,
    P: FnMut(&C, &mut Rng) -> C,
{
    let mut rec = Recorder::new();
    if stop.max_calls == 0 {
        return (init, rec.finish(Outcome::ExhaustedBudget));
    }
    let mut rng = seed.rng();
    let r = oracle.query(&init);
    let mut best_key = rec.record(init.summary(), &r, response_key(&r));
    let mut best = init;
    if r.is_blocked() {
        return (best, rec.finish(Outcome::Blocked));
    }
    if stop.stop_on_accept && r.accepted() {
        return (best, rec.finish(Outcome::Succeeded));
    }
    let mut stall = 0;
    while rec.len() < stop.max_calls {
        let cand = propose(&best, &mut rng);
        let r = oracle.query(&cand);
        let key = rec.record(cand.summary(), &r, response_key(&r));
        if r.is_blocked() {
            return (best, rec.finish(Outcome::Blocked));
        }
        if key > best_key {
            best_key = key;
            best = cand;
            stall = 0;
        } else {
            stall += 1;
        }
        if stop.stop_on_accept && r.accepted() {
            return (best, rec.finish(Outcome::Succeeded));
        }
        if stall >= stop.stall_limit {
            return (best, rec.finish(Outcome::Stalled));
        }
    }
    (best, rec.finish(Outcome::ExhaustedBudget))
}
