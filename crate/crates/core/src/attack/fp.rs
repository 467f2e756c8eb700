use std::f64::consts::{PI, TAU};

use rand::Rng as _;
use thiserror::Error;

use super::{response_key, AttackTrace, Outcome, Recorder, Response, ScoreOracle, Summarize};
use crate::matcher::{verify, MatchParams};
use crate::model::{wrap_angle, Minutia, MinutiaKind, MinutiaeTemplate, Rng, Seed, MAX_MINUTIAE};
use crate::sidechannel::{spearman, time_to_score_proxy, timed_compare, TimedResponse, TimingModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FpConfigError {
    #[error("population must be at least 1")]
    Population,
    #[error("minutiae_init must be a nonempty range starting at 1 or more")]
    InitRange,
    #[error("move weights must be nonnegative and sum to 1")]
    Weights,
    #[error("perturbation magnitudes must be finite and nonnegative")]
    Magnitudes,
    #[error("max_moves must be at least 1 and relocate a probability")]
    Moves,
    #[error("dimensions must be positive")]
    Dims,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveWeights {
    pub perturb: f64,
    pub add: f64,
    pub delete: f64,
}

impl Default for MoveWeights {
    fn default() -> Self {
        MoveWeights {
            perturb: 0.6,
            add: 0.2,
            delete: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpAttackConfig {
    pub population: usize,
    /// Inclusive minutiae count range of the initial random templates.
    pub minutiae_init: (usize, usize),
    pub weights: MoveWeights,
    /// Pixels.
    pub perturb_radius: f64,
    /// Radians.
    pub perturb_angle: f64,
    pub max_oracle_calls: u64,
    /// Generations without a strict improvement before giving up.
    pub stall_limit: usize,
    /// Each mutant applies between 1 and this many moves.
    pub max_moves: usize,
    /// Share of modify moves that redraw the minutia anywhere instead of
    /// nudging it.
    pub relocate: f64,
    /// Adds are skipped once a candidate has this many minutiae.
    pub max_minutiae: usize,
}

impl Default for FpAttackConfig {
    fn default() -> Self {
        FpAttackConfig {
            population: 8,
            minutiae_init: (6, 20),
            weights: MoveWeights::default(),
            perturb_radius: 10.0,
            perturb_angle: PI / 6.0,
            max_oracle_calls: 20_000,
            stall_limit: 500,
            max_moves: 3,
            relocate: 0.4,
            max_minutiae: 100,
        }
    }
}

impl FpAttackConfig {
    pub fn validate(&self) -> Result<(), FpConfigError> {
        if self.population < 1 {
            return Err(FpConfigError::Population);
        }
        let (lo, hi) = self.minutiae_init;
        if lo < 1 || lo > hi || hi > self.max_minutiae || self.max_minutiae > MAX_MINUTIAE {
            return Err(FpConfigError::InitRange);
        }
        let w = self.weights;
        let parts = [w.perturb, w.add, w.delete];
        if parts.iter().any(|x| !(*x >= 0.0)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(FpConfigError::Weights);
        }
        let mags = [self.perturb_radius, self.perturb_angle];
        if mags.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(FpConfigError::Magnitudes);
        }
        if self.max_moves < 1 || !(0.0..=1.0).contains(&self.relocate) {
            return Err(FpConfigError::Moves);
        }
        Ok(())
    }
}

/// Verification endpoint for one enrolled template.
pub struct FpOracle {
    target: MinutiaeTemplate,
    params: MatchParams,
    calls: u64,
}

impl FpOracle {
    pub fn new(target: MinutiaeTemplate, params: MatchParams) -> Self {
        FpOracle {
            target,
            params,
            calls: 0,
        }
    }
}

impl ScoreOracle<MinutiaeTemplate> for FpOracle {
    fn query(&mut self, probe: &MinutiaeTemplate) -> Response {
        self.calls += 1;
        let (score, decision) = verify(probe, &self.target, &self.params);
        Response::Scored { score, decision }
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}

/// Endpoint that answers with a decision and the simulated comparison time.
pub struct TimedOracle {
    target: MinutiaeTemplate,
    params: MatchParams,
    model: TimingModel,
    seed: Seed,
    calls: u64,
}

impl TimedOracle {
    pub fn new(target: MinutiaeTemplate, params: MatchParams, model: TimingModel, seed: Seed) -> Self {
        TimedOracle {
            target,
            params,
            model,
            seed,
            calls: 0,
        }
    }
}

impl ScoreOracle<MinutiaeTemplate> for TimedOracle {
    fn query(&mut self, probe: &MinutiaeTemplate) -> Response {
        self.calls += 1;
        let r = timed_compare(probe, &self.target, &self.params, &self.model, self.seed.derive(self.calls));
        Response::Timed {
            work_units: r.work_units,
            decision: r.decision.expect("unblocked comparison"),
        }
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}

fn random_minutia(rng: &mut Rng, (w, h): (u32, u32)) -> Minutia {
    let kind = if rng.random_bool(0.5) {
        MinutiaKind::Termination
    } else {
        MinutiaKind::Bifurcation
    };
    Minutia::new(rng.random_range(0..w), rng.random_range(0..h), rng.random_range(0.0..TAU), kind)
}

/// A template of uniformly random minutiae, sized within `cfg.minutiae_init`.
pub fn random_candidate(rng: &mut Rng, cfg: &FpAttackConfig, dims: (u32, u32)) -> MinutiaeTemplate {
    let (lo, hi) = cfg.minutiae_init;
    let n = rng.random_range(lo..=hi);
    let ms = (0..n).map(|_| random_minutia(rng, dims)).collect();
    MinutiaeTemplate::with_minutiae(dims.0, dims.1, 500, ms).expect("sampled inside bounds")
}

/// A mutant of `best`: one to `max_moves` random moves.
fn mutate(best: &MinutiaeTemplate, rng: &mut Rng, cfg: &FpAttackConfig, dims: (u32, u32)) -> MinutiaeTemplate {
    let mut t = best.clone();
    for _ in 0..rng.random_range(1..=cfg.max_moves) {
        apply_move(&mut t, rng, cfg, dims);
    }
    t
}

/// Signed offset in `[-r, r]`, cubed so that small nudges dominate.
fn nudge(rng: &mut Rng, r: f64) -> f64 {
    if r > 0.0 {
        r * rng.random_range(-1.0f64..=1.0).powi(3)
    } else {
        0.0
    }
}

/// Perturb, add or delete one minutia.
fn apply_move(t: &mut MinutiaeTemplate, rng: &mut Rng, cfg: &FpAttackConfig, dims: (u32, u32)) {
    let w = cfg.weights;
    let u = rng.random_range(0.0..1.0);
    if u < w.add {
        if t.len() < cfg.max_minutiae {
            t.push(random_minutia(rng, dims)).expect("sampled inside bounds");
        }
    } else if u < w.add + w.delete && t.len() > 1 {
        let i = rng.random_range(0..t.len());
        t.remove(i);
    } else if !t.is_empty() {
        // perturb; also the fallback when a delete would empty the template
        let i = rng.random_range(0..t.len());
        if cfg.relocate > 0.0 && rng.random_bool(cfg.relocate) {
            t.replace(i, random_minutia(rng, dims)).expect("sampled inside bounds");
            return;
        }
        let m = t.minutiae()[i];
        let x = (m.x as f64 + nudge(rng, cfg.perturb_radius)).round().clamp(0.0, (dims.0 - 1) as f64);
        let y = (m.y as f64 + nudge(rng, cfg.perturb_radius)).round().clamp(0.0, (dims.1 - 1) as f64);
        let theta = wrap_angle(m.theta + nudge(rng, cfg.perturb_angle));
        t.replace(i, Minutia::new(x as u32, y as u32, theta, m.kind)).expect("clamped inside bounds");
    }
}

enum Step {
    Continue,
    Stop(Outcome),
}

/// The population loop shared by the score and timing attacks. `key` turns a
/// response into the attacker's selection value.
fn population_climb<O>(
    oracle: &mut O,
    cfg: &FpAttackConfig,
    dims: (u32, u32),
    rng: &mut Rng,
    rec: &mut Recorder,
    key: &dyn Fn(&Response) -> f64,
) -> (Option<MinutiaeTemplate>, Outcome)
where
    O: ScoreOracle<MinutiaeTemplate> + ?Sized,
{
    let mut best: Option<(MinutiaeTemplate, f64)> = None;
    let mut query = |t: &MinutiaeTemplate, rec: &mut Recorder| -> (f64, Step) {
        if rec.len() >= cfg.max_oracle_calls {
            return (f64::NEG_INFINITY, Step::Stop(Outcome::ExhaustedBudget));
        }
        let r = oracle.query(t);
        let k = rec.record(t.summary(), &r, key(&r));
        if r.is_blocked() {
            (k, Step::Stop(Outcome::Blocked))
        } else if r.accepted() {
            (k, Step::Stop(Outcome::Succeeded))
        } else {
            (k, Step::Continue)
        }
    };
    // step 1-3: a random population, keep the best scorer
    for _ in 0..cfg.population {
        let t = random_candidate(rng, cfg, dims);
        let (k, step) = query(&t, rec);
        if let Step::Stop(outcome) = step {
            let keep = if outcome == Outcome::Succeeded { Some(t) } else { best.map(|b| b.0) };
            return (keep, outcome);
        }
        if best.as_ref().is_none_or(|b| k > b.1) {
            best = Some((t, k));
        }
    }
    let (mut best_t, mut best_k) = best.expect("population is at least 1");
    let mut stall = 0;
    loop {
        // step 5: mutants of the best, then back to step 2
        let mut gen_best: Option<(MinutiaeTemplate, f64)> = None;
        for _ in 0..cfg.population {
            let t = mutate(&best_t, rng, cfg, dims);
            let (k, step) = query(&t, rec);
            if let Step::Stop(outcome) = step {
                let keep = if outcome == Outcome::Succeeded { t } else { best_t };
                return (Some(keep), outcome);
            }
            if gen_best.as_ref().is_none_or(|b| k > b.1) {
                gen_best = Some((t, k));
            }
        }
        let (t, k) = gen_best.expect("population is at least 1");
        if k > best_k {
            best_t = t;
            best_k = k;
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.stall_limit {
                return (Some(best_t), Outcome::Stalled);
            }
        }
    }
}

fn empty(dims: (u32, u32)) -> MinutiaeTemplate {
    MinutiaeTemplate::new(dims.0, dims.1, 500)
}

/// Minutiae hill climb against a score-revealing endpoint.
///
/// Seeds `population` random templates, then repeatedly spawns that many
/// single-move mutants of the best one, adopting the best mutant only when it
/// scores strictly higher. Stops at the first accepted query, when the call
/// budget runs out, after `stall_limit` fruitless generations, or when the
/// endpoint blocks.
pub fn attack_fp<O>(
    oracle: &mut O,
    cfg: &FpAttackConfig,
    dims: (u32, u32),
    seed: Seed,
) -> Result<(MinutiaeTemplate, AttackTrace), FpConfigError>
where
    O: ScoreOracle<MinutiaeTemplate> + ?Sized,
{
    cfg.validate()?;
    if dims.0 == 0 || dims.1 == 0 {
        return Err(FpConfigError::Dims);
    }
    let mut rng = seed.rng();
    let mut rec = Recorder::new();
    let (t, outcome) = population_climb(oracle, cfg, dims, &mut rng, &mut rec, &response_key);
    Ok((t.unwrap_or_else(|| empty(dims)), rec.finish(outcome)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingAttackConfig {
    pub fp: FpAttackConfig,
    /// Random probes spent deciding whether longer comparisons mean closer ones.
    pub calibration_probes: usize,
}

impl Default for TimingAttackConfig {
    fn default() -> Self {
        TimingAttackConfig {
            fp: FpAttackConfig::default(),
            calibration_probes: 50,
        }
    }
}

fn timed_sample(r: &Response) -> TimedResponse {
    match *r {
        Response::Timed { work_units, decision } => TimedResponse {
            decision: Some(decision),
            work_units,
        },
        _ => TimedResponse {
            decision: None,
            work_units: 0,
        },
    }
}

/// [`attack_fp`] driven by elapsed work instead of scores.
///
/// Calibration probes come first. If their work correlates negatively with
/// acceptance, less work is read as closer. Selection compares signed work
/// directly, which orders candidates exactly as proxies over any shared
/// window would. The trace reports proxies normalised over the whole run.
pub fn timing_attack<O>(
    oracle: &mut O,
    cfg: &TimingAttackConfig,
    dims: (u32, u32),
    seed: Seed,
) -> Result<(MinutiaeTemplate, AttackTrace), FpConfigError>
where
    O: ScoreOracle<MinutiaeTemplate> + ?Sized,
{
    cfg.fp.validate()?;
    if dims.0 == 0 || dims.1 == 0 {
        return Err(FpConfigError::Dims);
    }
    let mut rec = Recorder::new();
    let mut responses = Vec::new();
    let mut cal_rng = seed.derive(1).rng();
    let mut early: Option<(MinutiaeTemplate, Outcome)> = None;
    for _ in 0..cfg.calibration_probes {
        if rec.len() >= cfg.fp.max_oracle_calls {
            early = Some((empty(dims), Outcome::ExhaustedBudget));
            break;
        }
        let t = random_candidate(&mut cal_rng, &cfg.fp, dims);
        let r = oracle.query(&t);
        rec.record(t.summary(), &r, response_key(&r));
        responses.push(r);
        if r.is_blocked() {
            early = Some((empty(dims), Outcome::Blocked));
            break;
        }
        if r.accepted() {
            early = Some((t, Outcome::Succeeded));
            break;
        }
    }
    let work: Vec<f64> = responses.iter().map(|r| timed_sample(r).work_units as f64).collect();
    let acc: Vec<f64> = responses.iter().map(|r| r.accepted() as u8 as f64).collect();
    let sign = match spearman(&work, &acc) {
        Some(rho) if rho < 0.0 => -1.0,
        _ => 1.0,
    };
    let (t, outcome) = match early {
        Some(done) => done,
        None => {
            let mut rng = seed.rng();
            let key = |r: &Response| match r {
                Response::Blocked => f64::NEG_INFINITY,
                _ => sign * timed_sample(r).work_units as f64,
            };
            let (t, outcome) = population_climb(oracle, &cfg.fp, dims, &mut rng, &mut rec, &key);
            (t.unwrap_or_else(|| empty(dims)), outcome)
        }
    };
    let mut trace = rec.finish(outcome);
    to_proxies(&mut trace, sign);
    Ok((t, trace))
}

/// Replaces raw work in `observed`/`best` with min-max proxies over the run.
fn to_proxies(trace: &mut AttackTrace, sign: f64) {
    let samples: Vec<TimedResponse> = trace
        .entries
        .iter()
        .map(|e| match e.observed {
            Some(w) => TimedResponse {
                decision: Some(if e.accepted {
                    crate::model::Decision::Accept
                } else {
                    crate::model::Decision::Reject
                }),
                work_units: w.abs().round() as u64,
            },
            None => TimedResponse {
                decision: None,
                work_units: 0,
            },
        })
        .collect();
    let Ok(proxies) = time_to_score_proxy(&samples) else {
        return;
    };
    let mut best = 0.0f64;
    for (e, p) in trace.entries.iter_mut().zip(proxies) {
        e.observed = p.map(|p| if sign < 0.0 { 1.0 - p } else { p });
        if let Some(p) = e.observed {
            best = best.max(p);
        }
        e.best = best;
    }
}
