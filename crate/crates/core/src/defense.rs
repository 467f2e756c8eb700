//! Countermeasures at the score output: coarsen, randomise within the
//! decision band, withhold, or cap the number of queries.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use thiserror::Error;

use crate::attack::{
    attack_face, attack_fp, timing_attack, AttackTrace, FaceAttackConfig, FaceOracle, FpAttackConfig, FpOracle,
    Outcome, Response, ScoreOracle, TimedOracle, TimingAttackConfig,
};
use crate::face::{gen_face_db, train_eigenfaces, FaceCoefficients, FaceDb, FaceError, FaceModel};
use crate::generate::random_template;
use crate::matcher::MatchParams;
use crate::model::{decide, MatchScore, Rng, Seed};
use crate::par;
use crate::sidechannel::TimingModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DefenseError {
    #[error("quantization step must lie in (0, 1], got {0}")]
    BadStep(f64),
    #[error("rate-limit budget and epoch length must be at least 1")]
    BadRateLimit,
    #[error(transparent)]
    Face(#[from] FaceError),
}

/// `floor(s / step) · step`, clamped into `[0, 1]`.
pub fn quantize_score(s: MatchScore, step: f64) -> Result<MatchScore, DefenseError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(DefenseError::BadStep(step));
    }
    // the small slack keeps exact multiples like 0.7 / 0.1 from flooring down
    let q = ((s.value() / step) + 1e-9).floor() * step;
    Ok(MatchScore::new(q))
}

/// A fictitious score on the same side of `tau` as `s`.
pub fn jitter_score(s: MatchScore, tau: f64, rng: &mut Rng) -> MatchScore {
    let v = if s.value() >= tau {
        if tau >= 1.0 {
            1.0
        } else {
            rng.random_range(tau..=1.0)
        }
    } else if tau <= 0.0 {
        0.0
    } else {
        rng.random_range(0.0..tau)
    };
    MatchScore::new(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Visibility {
    Full,
    Quantized(f64),
    Hidden,
    Jittered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateLimit {
    /// Queries allowed per epoch.
    pub budget: u64,
    /// Logical ticks per epoch.
    pub epoch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefensePolicy {
    pub visibility: Visibility,
    pub rate_limit: Option<RateLimit>,
}

impl DefensePolicy {
    pub const FULL: DefensePolicy = DefensePolicy {
        visibility: Visibility::Full,
        rate_limit: None,
    };

    pub fn visible(visibility: Visibility) -> Self {
        DefensePolicy {
            visibility,
            rate_limit: None,
        }
    }

    pub fn validate(&self) -> Result<(), DefenseError> {
        if let Visibility::Quantized(step) = self.visibility {
            if !(step > 0.0 && step <= 1.0) {
                return Err(DefenseError::BadStep(step));
            }
        }
        if let Some(rl) = self.rate_limit {
            if rl.budget < 1 || rl.epoch < 1 {
                return Err(DefenseError::BadRateLimit);
            }
        }
        Ok(())
    }
}

/// Short stable name, e.g. `quantized(0.05)+limit(500/1)`.
impl fmt::Display for DefensePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.visibility {
            Visibility::Full => f.write_str("full")?,
            Visibility::Quantized(step) => write!(f, "quantized({step})")?,
            Visibility::Hidden => f.write_str("hidden")?,
            Visibility::Jittered => f.write_str("jittered")?,
        }
        if let Some(rl) = self.rate_limit {
            write!(f, "+limit({}/{})", rl.budget, rl.epoch)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("cannot parse defense policy {0:?}")]
pub struct PolicyParseError(pub String);

/// Parses the [`Display`](fmt::Display) form back, e.g. `hidden+limit(500/1)`.
impl FromStr for DefensePolicy {
    type Err = PolicyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PolicyParseError(s.to_string());
        let (vis, limit) = match s.split_once('+') {
            Some((v, l)) => (v, Some(l)),
            None => (s, None),
        };
        let visibility = match vis.trim() {
            "full" => Visibility::Full,
            "hidden" => Visibility::Hidden,
            "jittered" => Visibility::Jittered,
            v => {
                let step = v
                    .strip_prefix("quantized(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|r| r.parse::<f64>().ok())
                    .ok_or_else(bad)?;
                Visibility::Quantized(step)
            }
        };
        let rate_limit = match limit {
            None => None,
            Some(l) => {
                let (b, e) = l
                    .trim()
                    .strip_prefix("limit(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|r| r.split_once('/'))
                    .ok_or_else(bad)?;
                Some(RateLimit {
                    budget: b.parse().map_err(|_| bad())?,
                    epoch: e.parse().map_err(|_| bad())?,
                })
            }
        };
        Ok(DefensePolicy { visibility, rate_limit })
    }
}

/// An oracle behind a policy. Blocked queries never reach the inner oracle
/// but still count as calls.
pub struct Defended<O> {
    inner: O,
    policy: DefensePolicy,
    tau: f64,
    rng: Rng,
    calls: u64,
    ticks: u64,
    used: u64,
}

impl<O> Defended<O> {
    pub fn new(inner: O, policy: DefensePolicy, tau: f64, seed: Seed) -> Result<Self, DefenseError> {
        policy.validate()?;
        Ok(Defended {
            inner,
            policy,
            tau,
            rng: seed.rng(),
            calls: 0,
            ticks: 0,
            used: 0,
        })
    }

    /// Advances the logical clock; a new epoch restores the query budget.
    pub fn tick(&mut self) {
        self.ticks += 1;
        if let Some(rl) = self.policy.rate_limit {
            if self.ticks.is_multiple_of(rl.epoch) {
                self.used = 0;
            }
        }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

/// Full-visibility oracle capped at `budget` queries per `epoch` ticks.
pub fn rate_limited<O>(inner: O, budget: u64, epoch: u64) -> Result<Defended<O>, DefenseError> {
    let policy = DefensePolicy {
        visibility: Visibility::Full,
        rate_limit: Some(RateLimit { budget, epoch }),
    };
    Defended::new(inner, policy, 0.0, Seed(0))
}

impl<C: ?Sized, O: ScoreOracle<C>> ScoreOracle<C> for Defended<O> {
    fn query(&mut self, candidate: &C) -> Response {
        self.calls += 1;
        if let Some(rl) = self.policy.rate_limit {
            if self.used >= rl.budget {
                return Response::Blocked;
            }
            self.used += 1;
        }
        let r = self.inner.query(candidate);
        let Response::Scored { score, decision } = r else {
            return r;
        };
        match self.policy.visibility {
            Visibility::Full => r,
            Visibility::Quantized(step) => Response::Scored {
                score: quantize_score(score, step).expect("validated step"),
                decision,
            },
            Visibility::Hidden => Response::DecisionOnly(decision),
            Visibility::Jittered => {
                let s = jitter_score(score, self.tau, &mut self.rng);
                debug_assert_eq!(decide(s, self.tau), decision);
                Response::Scored { score: s, decision }
            }
        }
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}

/// The attacks a defense evaluation can run.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackKind {
    Fingerprint(FpAttackConfig),
    Timing(TimingAttackConfig, TimingModel),
    Face(FaceAttackConfig),
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Fingerprint(_) => "fingerprint",
            AttackKind::Timing(..) => "timing",
            AttackKind::Face(_) => "face",
        }
    }
}

/// Fixed parts of the simulated system the attacks run against.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub match_params: MatchParams,
    /// Minutiae per enrolled target.
    pub target_minutiae: usize,
    pub fp_dims: (u32, u32),
    pub face_dims: (usize, usize),
    /// Images in the face database.
    pub face_db_size: usize,
    pub face_k: usize,
    pub face_tau: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            match_params: MatchParams::default(),
            target_minutiae: 12,
            fp_dims: (256, 288),
            face_dims: (32, 32),
            face_db_size: 64,
            face_k: 32,
            face_tau: 0.7,
        }
    }
}

/// Everything a single trial needs beyond its seeds.
pub struct FaceSetup {
    pub db: FaceDb,
    pub model: FaceModel,
}

impl FaceSetup {
    pub fn new(sc: &Scenario, seed: Seed) -> Result<Self, FaceError> {
        let (w, h) = sc.face_dims;
        let db = gen_face_db(seed, sc.face_db_size, w, h)?;
        let model = train_eigenfaces(&db, sc.face_k)?;
        Ok(FaceSetup { db, model })
    }

    /// An in-span target: coefficients drawn within ±1.5 standard deviations.
    pub fn target(&self, seed: Seed) -> crate::model::GrayImage {
        let mut rng = seed.rng();
        let c = self
            .model
            .eigenvalues()
            .iter()
            .map(|l| 1.5 * l.sqrt() * rng.random_range(-1.0..=1.0))
            .collect();
        self.model.render(&FaceCoefficients(c))
    }
}

/// Runs one attack trial. Trial seeds split into target, attack and policy streams.
pub fn run_trial(
    attack: &AttackKind,
    policy: &DefensePolicy,
    sc: &Scenario,
    face: Option<&FaceSetup>,
    trial_seed: Seed,
) -> Result<AttackTrace, DefenseError> {
    let (target_seed, attack_seed, policy_seed) = (trial_seed.derive(0), trial_seed.derive(1), trial_seed.derive(2));
    let tau = sc.match_params.tau;
    let trace = match attack {
        AttackKind::Fingerprint(cfg) => {
            let (w, h) = sc.fp_dims;
            let target = random_template(target_seed, sc.target_minutiae, w, h);
            let mut o = Defended::new(FpOracle::new(target, sc.match_params), *policy, tau, policy_seed)?;
            attack_fp(&mut o, cfg, sc.fp_dims, attack_seed).expect("validated config").1
        }
        AttackKind::Timing(cfg, model) => {
            let (w, h) = sc.fp_dims;
            let target = random_template(target_seed, sc.target_minutiae, w, h);
            let inner = TimedOracle::new(target, sc.match_params, *model, trial_seed.derive(3));
            let mut o = Defended::new(inner, *policy, tau, policy_seed)?;
            timing_attack(&mut o, cfg, sc.fp_dims, attack_seed).expect("validated config").1
        }
        AttackKind::Face(cfg) => {
            let f = face.expect("face attacks need a face setup");
            let target = f.target(target_seed);
            let inner = FaceOracle::new(&f.model, &target, sc.face_tau)?;
            let mut o = Defended::new(inner, *policy, sc.face_tau, policy_seed)?;
            attack_face(&mut o, &f.db, &f.model, cfg, attack_seed)?.1
        }
    };
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportCell {
    pub attack: String,
    pub policy: String,
    pub trials: usize,
    pub successes: usize,
    /// Median call index of the first acceptance, over successful trials.
    pub median_calls: Option<f64>,
    /// Trial counts per outcome, in [`Outcome::ALL`] order.
    pub histogram: [usize; 4],
}

impl ReportCell {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DefenseReport {
    pub cells: Vec<ReportCell>,
}

impl DefenseReport {
    pub fn cell(&self, attack: &str, policy: &str) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.attack == attack && c.policy == policy)
    }
}

pub fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

pub fn summarize(attack: &str, policy: &str, traces: &[AttackTrace]) -> ReportCell {
    let mut histogram = [0usize; 4];
    let mut calls = Vec::new();
    for t in traces {
        let slot = Outcome::ALL.iter().position(|o| *o == t.outcome).expect("known outcome");
        histogram[slot] += 1;
        if t.outcome == Outcome::Succeeded {
            calls.push(t.first_accept().unwrap_or(t.len() as u64) as f64);
        }
    }
    ReportCell {
        attack: attack.to_string(),
        policy: policy.to_string(),
        trials: traces.len(),
        successes: histogram[0],
        median_calls: median(&mut calls),
        histogram,
    }
}

/// Cross product of attacks and policies. Trial `i` uses the same seeds in
/// every cell, so cells are paired comparisons.
pub fn evaluate_defenses(
    attacks: &[AttackKind],
    policies: &[DefensePolicy],
    trials: usize,
    sc: &Scenario,
    seed: Seed,
) -> Result<DefenseReport, DefenseError> {
    assert!(trials >= 1, "at least one trial");
    for p in policies {
        p.validate()?;
    }
    let face = if policies.is_empty() || !attacks.iter().any(|a| matches!(a, AttackKind::Face(_))) {
        None
    } else {
        Some(FaceSetup::new(sc, seed.derive(u64::MAX))?)
    };
    let mut cells = Vec::new();
    for a in attacks {
        for p in policies {
            let traces = par::map_range(trials, |i| run_trial(a, p, sc, face.as_ref(), seed.derive(i as u64)));
            let traces: Vec<AttackTrace> = traces.into_iter().collect::<Result<_, _>>()?;
            cells.push(summarize(a.name(), &p.to_string(), &traces));
        }
    }
    Ok(DefenseReport { cells })
}
